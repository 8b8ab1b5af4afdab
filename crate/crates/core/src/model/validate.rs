//! Empirical checks of the positivity, growth and Lipschitz hypotheses.
//!
//! Growth and Lipschitz conditions are analytic statements; here they are
//! reduced to measured constants over finite sample sets. Only positivity
//! on active pairs (and zero rates on inactive pairs) is a hard check.

use serde::Serialize;

use super::{ControlGrid, Intensity, MeanField};
use crate::space::{wasserstein2, Dist};

/// Inputs at which the model is probed.
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub times: Vec<f64>,
    pub dists: Vec<Dist>,
    pub u_grid: ControlGrid,
    pub v_grid: ControlGrid,
    /// User-declared Lipschitz constant `K` for `μ ↦ λ_ij`, if any.
    pub declared_lipschitz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub t: f64,
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

/// Largest measured `|∂λ/∂m|` for one mean-field statistic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentSlope {
    pub statistic: &'static str,
    pub up: f64,
    pub down: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub positivity_violations: Vec<Violation>,
    pub inactive_violations: Vec<Violation>,
    pub min_active_rate: f64,
    /// Smallest constant `C` with `Σ|j−i|ᵖλ_ij ≤ C(1 + iᵖ + ∫yᵖdμ)`, `p = 1, 2`.
    pub growth_constant: [f64; 2],
    /// `max |λ_ij(μ) − λ_ij(ν)| / W₂(μ,ν)` over sampled pairs.
    pub lipschitz_mu: f64,
    /// `max Σ_j |j−i|ᵖ |Δλ_ij| / W₂ᵖ`, `p = 1, 2`.
    pub lipschitz_mu_weighted: [f64; 2],
    /// `max Σ_j |j−i|ᵖ |Δλ_ij| / |u − u'|ᵖ` over distinct control points, `p = 1`.
    pub lipschitz_control: f64,
    pub moment_slopes: Vec<MomentSlope>,
    pub reference_min_rate: f64,
    pub reference_second_moment: f64,
    pub lipschitz_within_declared: Option<bool>,
}

impl AssumptionReport {
    pub fn positivity_ok(&self) -> bool {
        self.positivity_violations.is_empty() && self.inactive_violations.is_empty()
    }
}

const SLOPE_STEP: f64 = 1e-3;

pub fn validate_assumptions<M: Intensity + ?Sized>(model: &M, samples: &SampleSet) -> AssumptionReport {
    let space = model.space();
    let g = model.reference();
    let mfs: Vec<MeanField> = samples.dists.iter().map(MeanField::of).collect();
    let mut positivity = Vec::new();
    let mut inactive = Vec::new();
    let mut min_active = f64::INFINITY;
    let mut growth = [0.0f64; 2];
    let mut slopes = [[0.0f64; 2]; MeanField::DIM];

    for &t in &samples.times {
        for (mu, mf) in samples.dists.iter().zip(&mfs) {
            for u in samples.u_grid.points() {
                for v in samples.v_grid.points() {
                    for i in space.states() {
                        let mut weighted = [0.0f64; 2];
                        for j in space.states().filter(|&j| j != i) {
                            let r = model.rate(t, i, j, mf, u, v);
                            if g.is_active(i, j) {
                                min_active = min_active.min(r);
                                if r <= 0.0 {
                                    positivity.push(Violation { t, from: i, to: j, rate: r });
                                }
                                let d = i.abs_diff(j) as f64;
                                weighted[0] += d * r;
                                weighted[1] += d * d * r;
                            } else if r != 0.0 {
                                inactive.push(Violation { t, from: i, to: j, rate: r });
                            }
                        }
                        let x = i as f64;
                        let scale = [1.0 + x + mu.mean(), 1.0 + x * x + mf.m2];
                        for p in 0..2 {
                            growth[p] = growth[p].max(weighted[p] / scale[p]);
                        }
                        let dirs = [i + 1, i.wrapping_sub(1)];
                        for (k, slope) in slopes.iter_mut().enumerate() {
                            let mut bumped = mf.to_array();
                            bumped[k] += SLOPE_STEP;
                            let bumped = MeanField::from_array(bumped);
                            for (side, &j) in dirs.iter().enumerate() {
                                if j <= space.n_max() && g.is_active(i, j) {
                                    let s = (model.rate(t, i, j, &bumped, u, v)
                                        - model.rate(t, i, j, mf, u, v))
                                        / SLOPE_STEP;
                                    slope[side] = slope[side].max(s.abs());
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let mut lip = 0.0f64;
    let mut lip_w = [0.0f64; 2];
    for a in 0..samples.dists.len() {
        for b in (a + 1)..samples.dists.len() {
            let d = match wasserstein2(&samples.dists[a], &samples.dists[b]) {
                Ok(d) if d > 0.0 => d,
                _ => continue,
            };
            for &t in &samples.times {
                for u in samples.u_grid.points() {
                    for v in samples.v_grid.points() {
                        for i in space.states() {
                            let mut w = [0.0f64; 2];
                            for &j in g.targets(i) {
                                let diff = (model.rate(t, i, j, &mfs[a], u, v)
                                    - model.rate(t, i, j, &mfs[b], u, v))
                                .abs();
                                lip = lip.max(diff / d);
                                let k = i.abs_diff(j) as f64;
                                w[0] += k * diff;
                                w[1] += k * k * diff;
                            }
                            lip_w[0] = lip_w[0].max(w[0] / d);
                            lip_w[1] = lip_w[1].max(w[1] / (d * d));
                        }
                    }
                }
            }
        }
    }

    let mut lip_u = 0.0f64;
    let grid = &samples.u_grid;
    for a in 0..grid.len() {
        for b in (a + 1)..grid.len() {
            let d = grid.distance(a, b);
            if d == 0.0 {
                continue;
            }
            for &t in &samples.times {
                for mf in &mfs {
                    for v in samples.v_grid.points() {
                        for i in space.states() {
                            let s: f64 = g
                                .targets(i)
                                .iter()
                                .map(|&j| {
                                    i.abs_diff(j) as f64
                                        * (model.rate(t, i, j, mf, grid.point(a), v)
                                            - model.rate(t, i, j, mf, grid.point(b), v))
                                        .abs()
                                })
                                .sum();
                            lip_u = lip_u.max(s / d);
                        }
                    }
                }
            }
        }
    }

    AssumptionReport {
        positivity_violations: positivity,
        inactive_violations: inactive,
        min_active_rate: min_active,
        growth_constant: growth,
        lipschitz_mu: lip,
        lipschitz_mu_weighted: lip_w,
        lipschitz_control: lip_u,
        moment_slopes: MeanField::NAMES
            .iter()
            .zip(slopes)
            .map(|(&statistic, [up, down])| MomentSlope {
                statistic,
                up,
                down,
            })
            .collect(),
        reference_min_rate: g.min_active_rate(),
        reference_second_moment: g.second_moment_sum(),
        lipschitz_within_declared: samples.declared_lipschitz.map(|k| lip <= k),
    }
}
