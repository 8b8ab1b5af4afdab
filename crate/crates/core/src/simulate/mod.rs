//! Path sampling by thinning, Girsanov weights and Monte Carlo estimators.
//!
//! Paths follow the same conventions as the ODE solvers: controls are read
//! from the row of the grid interval containing the current time, and the
//! law in the intensities is the linear interpolation of the frozen flow.
//! Every path `p` draws from its own stream `(seed, p)`, and reductions are
//! done in path order, so estimates do not depend on the thread count.

mod particles;

pub use particles::{fit_decay_exponent, particle_system, propagation_of_chaos, ChaosReport, ParticleReport};

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::CostSpec;
use crate::error::{Error, Result};
use crate::flow::{stream_rng, Dynamics, Flow, Policy, TimeGrid};
use crate::model::{Intensity, QMatrix};
use crate::space::pairwise_sum;

/// Safety factor applied to the grid-derived thinning majorant.
pub const MAJORANT_FACTOR: f64 = 1.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub x0: usize,
    pub events: Vec<Jump>,
    /// `ln L^u_T` of the path relative to the reference chain.
    pub log_girsanov: f64,
}

impl PathRecord {
    pub fn terminal(&self) -> usize {
        self.events.last().map_or(self.x0, |e| e.to)
    }

    /// Events chain, stay inside `(0, T]` and increase strictly in time.
    pub fn is_consistent(&self, horizon: f64) -> bool {
        let mut state = self.x0;
        let mut last = 0.0;
        for e in &self.events {
            if e.from != state || e.time <= last || e.time > horizon {
                return false;
            }
            state = e.to;
            last = e.time;
        }
        true
    }
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len();
        let mean = pairwise_sum(samples) / n as f64;
        let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { pairwise_sum(&sq) / (n - 1) as f64 } else { 0.0 };
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n_paths: n,
            seed,
        }
    }

    /// `|a − b| / sqrt(se_a² + se_b²)`; 0 when both agree exactly.
    pub fn z_score(&self, other: &McEstimate) -> f64 {
        let d = (self.mean - other.mean).abs();
        if d == 0.0 {
            return 0.0;
        }
        d / self.std_error.hypot(other.std_error)
    }
}

fn check_inputs<M: Intensity + ?Sized>(model: &M, flow: &Flow, x0: usize, n_paths: usize) -> Result<()> {
    if flow.space().len() != model.space().len() {
        return Err(Error::MismatchedSpace {
            left: model.space().len(),
            right: flow.space().len(),
        });
    }
    if x0 > model.space().n_max() {
        return Err(Error::invalid(format!("x0 = {x0} outside the state space")));
    }
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be >= 1"));
    }
    Ok(())
}

/// Pieces of `[a, b]` cut at grid nodes, as `(interval, w_start, w_end, length)`.
fn pieces(grid: TimeGrid, a: f64, b: f64, mut visit: impl FnMut(usize, f64, f64, f64)) {
    if b <= a {
        return;
    }
    let dt = grid.dt();
    let (mut k, mut wa) = grid.locate(a);
    if wa >= 1.0 && k + 1 < grid.n_steps() {
        k += 1;
        wa = 0.0;
    }
    let mut start = a;
    loop {
        let end_k = grid.time(k + 1);
        if b <= end_k || k + 1 == grid.n_steps() {
            let wb = ((b - grid.time(k)) / dt).clamp(0.0, 1.0);
            visit(k, wa, wb, b - start);
            return;
        }
        visit(k, wa, 1.0, end_k - start);
        start = end_k;
        k += 1;
        wa = 0.0;
    }
}

struct Sampler<'a, M: Intensity + ?Sized> {
    dynamics: Dynamics<'a, M>,
    majorant: Vec<f64>,
}

impl<'a, M: Intensity + ?Sized> Sampler<'a, M> {
    fn new(model: &'a M, flow: &Flow, policy: &'a Policy) -> Self {
        let dynamics = Dynamics::new(model, flow, policy);
        let majorant = dynamics
            .exit_rate_bounds()
            .into_iter()
            .map(|b| b * MAJORANT_FACTOR)
            .collect();
        Self { dynamics, majorant }
    }

    fn grid(&self) -> TimeGrid {
        self.dynamics.grid()
    }

    /// Ogata thinning with a per-state constant majorant.
    fn sample(&self, x0: usize, rng: &mut ChaCha8Rng, row: &mut Vec<f64>) -> Result<Vec<Jump>> {
        let horizon = self.grid().horizon();
        let mut events = Vec::new();
        let (mut t, mut x) = (0.0, x0);
        loop {
            let bound = self.majorant[x];
            if bound <= 0.0 {
                return Ok(events);
            }
            t += exponential(rng) / bound;
            if t > horizon {
                return Ok(events);
            }
            let (k, w) = self.grid().locate(t);
            self.dynamics.row(k, w, x, row);
            let total: f64 = row.iter().sum();
            if total > bound {
                return Err(Error::MajorantViolated {
                    t,
                    state: x,
                    rate: total,
                    bound,
                });
            }
            if rng.random::<f64>() * bound < total {
                let to = self.dynamics.targets(x)[pick(row, total, rng)];
                events.push(Jump { time: t, from: x, to });
                x = to;
            }
        }
    }

    /// `∫₀ᵀ f(t, x(t), μ_t, u(t, x(t))) dt` by the trapezoid rule on grid pieces.
    fn running_cost(&self, cost: &CostSpec, x0: usize, events: &[Jump]) -> f64 {
        let dyn_ = &self.dynamics;
        let policy = dyn_.policy();
        let mut total = 0.0;
        for_each_sojourn(self.grid().horizon(), x0, events, |x, a, b| {
            pieces(self.grid(), a, b, |k, w0, w1, len| {
                let (u, v) = (policy.u.point(k, x), policy.v.point(k, x));
                let f0 = cost.f(x, &dyn_.mean_field(k, w0), u, v);
                let f1 = cost.f(x, &dyn_.mean_field(k, w1), u, v);
                total += 0.5 * len * (f0 + f1);
            });
        });
        total
    }

    fn terminal_cost(&self, cost: &CostSpec, x: usize) -> f64 {
        let n = self.grid().n_steps();
        cost.h(x, &self.dynamics.mean_field(n - 1, 1.0))
    }

    /// `Σ_jumps ln(λ/g) − ∫ Σ_j (λ_{x,j} − g_{x,j}) ds`.
    fn log_weight(&self, x0: usize, events: &[Jump], row: &mut Vec<f64>) -> Result<f64> {
        let g = self.dynamics.model().reference();
        let mut jumps = 0.0;
        for e in events {
            let gij = g.rate(e.from, e.to);
            if e.from == e.to || gij <= 0.0 {
                return Err(Error::InactiveJump {
                    from: e.from,
                    to: e.to,
                    t: e.time,
                });
            }
            let (k, w) = self.grid().locate(e.time);
            self.dynamics.row(k, w, e.from, row);
            let pos = self
                .dynamics
                .targets(e.from)
                .iter()
                .position(|&j| j == e.to)
                .expect("active target");
            jumps += (row[pos] / gij).ln();
        }
        let mut compensator = 0.0;
        for_each_sojourn(self.grid().horizon(), x0, events, |x, a, b| {
            let gx = g.exit_rate(x);
            pieces(self.grid(), a, b, |k, w0, w1, len| {
                self.dynamics.row(k, w0, x, row);
                let e0: f64 = row.iter().sum::<f64>() - gx;
                self.dynamics.row(k, w1, x, row);
                let e1: f64 = row.iter().sum::<f64>() - gx;
                compensator += 0.5 * len * (e0 + e1);
            });
        });
        Ok(jumps - compensator)
    }
}

fn for_each_sojourn(horizon: f64, x0: usize, events: &[Jump], mut visit: impl FnMut(usize, f64, f64)) {
    let (mut x, mut t) = (x0, 0.0);
    for e in events {
        visit(x, t, e.time);
        x = e.to;
        t = e.time;
    }
    visit(x, t, horizon);
}

fn exponential(rng: &mut ChaCha8Rng) -> f64 {
    // 1 − U lies in (0, 1]
    -(1.0 - rng.random::<f64>()).ln()
}

fn pick(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return k;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Exact sampler of a time-homogeneous chain with generator `g`.
fn sample_homogeneous(g: &QMatrix, horizon: f64, x0: usize, rng: &mut ChaCha8Rng) -> Vec<Jump> {
    let mut events = Vec::new();
    let (mut t, mut x) = (0.0, x0);
    let mut row = Vec::new();
    loop {
        let exit = g.exit_rate(x);
        if exit <= 0.0 {
            return events;
        }
        t += exponential(rng) / exit;
        if t > horizon {
            return events;
        }
        row.clear();
        row.extend(g.targets(x).iter().map(|&j| g.rate(x, j)));
        let to = g.targets(x)[pick(&row, exit, rng)];
        events.push(Jump { time: t, from: x, to });
        x = to;
    }
}

/// One path of the controlled chain under the frozen flow, drawn from
/// stream `(seed, 0)`.
pub fn sample_path<M: Intensity + ?Sized>(
    model: &M,
    flow: &Flow,
    policy: &Policy,
    x0: usize,
    seed: u64,
) -> Result<PathRecord> {
    check_inputs(model, flow, x0, 1)?;
    let sampler = Sampler::new(model, flow, policy);
    let mut row = Vec::new();
    let events = sampler.sample(x0, &mut stream_rng(seed, 0), &mut row)?;
    let log_girsanov = sampler.log_weight(x0, &events, &mut row)?;
    Ok(PathRecord {
        x0,
        events,
        log_girsanov,
    })
}

/// One path of the reference chain, with its log-likelihood ratio under
/// the controlled intensities.
pub fn sample_reference_path<M: Intensity + ?Sized>(
    model: &M,
    flow: &Flow,
    policy: &Policy,
    x0: usize,
    seed: u64,
) -> Result<PathRecord> {
    check_inputs(model, flow, x0, 1)?;
    let sampler = Sampler::new(model, flow, policy);
    let events = sample_homogeneous(model.reference(), flow.grid().horizon(), x0, &mut stream_rng(seed, 0));
    let log_girsanov = sampler.log_weight(x0, &events, &mut Vec::new())?;
    Ok(PathRecord {
        x0,
        events,
        log_girsanov,
    })
}

/// `ln L^u_T` of a path, which is expected to come from the reference chain.
pub fn girsanov_logweight<M: Intensity + ?Sized>(
    model: &M,
    flow: &Flow,
    policy: &Policy,
    path: &PathRecord,
) -> Result<f64> {
    Sampler::new(model, flow, policy).log_weight(path.x0, &path.events, &mut Vec::new())
}

fn per_path<T: Send>(n_paths: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n_paths).into_par_iter().map(f).collect()
}

/// `E^u[exp(∫f + h)]` from paths of the controlled chain.
pub fn payoff_mc_direct<M: Intensity + ?Sized>(
    model: &M,
    flow: &Flow,
    policy: &Policy,
    cost: &CostSpec,
    x0: usize,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_inputs(model, flow, x0, n_paths)?;
    let sampler = Sampler::new(model, flow, policy);
    let samples = per_path(n_paths, |p| {
        let mut row = Vec::new();
        let events = sampler.sample(x0, &mut stream_rng(seed, p as u64), &mut row)?;
        let x_t = events.last().map_or(x0, |e| e.to);
        Ok((sampler.running_cost(cost, x0, &events) + sampler.terminal_cost(cost, x_t)).exp())
    })?;
    Ok(McEstimate::from_samples(&samples, seed))
}

/// `E[L^u_T · exp(∫f + h)]` from paths of the reference chain.
pub fn payoff_mc_girsanov<M: Intensity + ?Sized>(
    model: &M,
    flow: &Flow,
    policy: &Policy,
    cost: &CostSpec,
    x0: usize,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    weighted_reference_estimate(model, flow, policy, Some(cost), x0, n_paths, seed, None)
}

/// `E[L^u_T]`, which equals 1 when the paths come from the reference chain.
/// `sampling` replaces the chain the paths are drawn from while the weights
/// keep using the model's reference; a mismatch biases the estimate.
pub fn likelihood_ratio_mean<M: Intensity + ?Sized>(
    model: &M,
    flow: &Flow,
    policy: &Policy,
    x0: usize,
    n_paths: usize,
    seed: u64,
    sampling: Option<&QMatrix>,
) -> Result<McEstimate> {
    weighted_reference_estimate(model, flow, policy, None, x0, n_paths, seed, sampling)
}

#[allow(clippy::too_many_arguments)]
fn weighted_reference_estimate<M: Intensity + ?Sized>(
    model: &M,
    flow: &Flow,
    policy: &Policy,
    cost: Option<&CostSpec>,
    x0: usize,
    n_paths: usize,
    seed: u64,
    sampling: Option<&QMatrix>,
) -> Result<McEstimate> {
    check_inputs(model, flow, x0, n_paths)?;
    let chain = sampling.unwrap_or(model.reference());
    if chain.space() != model.space() {
        return Err(Error::MismatchedSpace {
            left: model.space().len(),
            right: chain.space().len(),
        });
    }
    let sampler = Sampler::new(model, flow, policy);
    let horizon = flow.grid().horizon();
    let samples = per_path(n_paths, |p| {
        let events = sample_homogeneous(chain, horizon, x0, &mut stream_rng(seed, p as u64));
        let mut log = sampler.log_weight(x0, &events, &mut Vec::new())?;
        if let Some(cost) = cost {
            let x_t = events.last().map_or(x0, |e| e.to);
            log += sampler.running_cost(cost, x0, &events) + sampler.terminal_cost(cost, x_t);
        }
        Ok(log.exp())
    })?;
    Ok(McEstimate::from_samples(&samples, seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMoment {
    pub from: usize,
    pub to: usize,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub pairs: Vec<PairMoment>,
    /// Pairs whose mean exceeds `FLAG_SE` standard errors.
    pub flagged: Vec<(usize, usize)>,
    pub max_abs_z: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl MartingaleReport {
    pub const FLAG_SE: f64 = 4.0;
}

const BLOCK: usize = 1024;

/// Monte Carlo means of `M_ij(T) = N_ij(T) − ∫ 1{x=i} λ_ij ds` for every
/// active pair, under the controlled chain.
pub fn martingale_diagnostic<M: Intensity + ?Sized>(
    model: &M,
    flow: &Flow,
    policy: &Policy,
    x0: usize,
    n_paths: usize,
    seed: u64,
) -> Result<MartingaleReport> {
    check_inputs(model, flow, x0, n_paths)?;
    let sampler = Sampler::new(model, flow, policy);
    let n = model.space().len();
    let mut offset = vec![0usize; n + 1];
    for i in 0..n {
        offset[i + 1] = offset[i] + model.targets(i).len();
    }
    let width = offset[n];
    let grid = flow.grid();

    // fixed blocks of paths keep the reduction order independent of threads
    let n_blocks = n_paths.div_ceil(BLOCK);
    let blocks = per_path(n_blocks, |b| {
        let mut sum = vec![0.0; width];
        let mut sq = vec![0.0; width];
        let mut m = vec![0.0; width];
        let mut row = Vec::new();
        for p in b * BLOCK..((b + 1) * BLOCK).min(n_paths) {
            m.iter_mut().for_each(|x| *x = 0.0);
            let events = sampler.sample(x0, &mut stream_rng(seed, p as u64), &mut row)?;
            for e in &events {
                let pos = model.targets(e.from).iter().position(|&j| j == e.to).expect("active");
                m[offset[e.from] + pos] += 1.0;
            }
            for_each_sojourn(grid.horizon(), x0, &events, |x, a, bnd| {
                pieces(grid, a, bnd, |k, w0, w1, len| {
                    sampler.dynamics.row(k, w0, x, &mut row);
                    for (c, r) in row.iter().enumerate() {
                        m[offset[x] + c] -= 0.5 * len * r;
                    }
                    sampler.dynamics.row(k, w1, x, &mut row);
                    for (c, r) in row.iter().enumerate() {
                        m[offset[x] + c] -= 0.5 * len * r;
                    }
                });
            });
            for c in 0..width {
                sum[c] += m[c];
                sq[c] += m[c] * m[c];
            }
        }
        Ok((sum, sq))
    })?;
    let np = n_paths as f64;
    let mut pairs = Vec::with_capacity(width);
    let mut flagged = Vec::new();
    let mut max_abs_z = 0.0f64;
    for i in 0..n {
        for (c, &j) in model.targets(i).iter().enumerate() {
            let idx = offset[i] + c;
            let s: Vec<f64> = blocks.iter().map(|b| b.0[idx]).collect();
            let q: Vec<f64> = blocks.iter().map(|b| b.1[idx]).collect();
            let mean = pairwise_sum(&s) / np;
            let var = if n_paths > 1 {
                ((pairwise_sum(&q) - np * mean * mean) / (np - 1.0)).max(0.0)
            } else {
                0.0
            };
            let se = (var / np).sqrt();
            let z = if mean == 0.0 { 0.0 } else { mean.abs() / se };
            if z > MartingaleReport::FLAG_SE {
                flagged.push((i, j));
            }
            max_abs_z = max_abs_z.max(z);
            pairs.push(PairMoment {
                from: i,
                to: j,
                mean,
                std_error: se,
            });
        }
    }
    Ok(MartingaleReport {
        pairs,
        flagged,
        max_abs_z,
        n_paths,
        seed,
    })
}

/// `n_paths` controlled paths, path `p` from stream `(seed, p)`.
pub fn sample_paths<M: Intensity + ?Sized>(
    model: &M,
    flow: &Flow,
    policy: &Policy,
    x0: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PathRecord>> {
    check_inputs(model, flow, x0, n_paths)?;
    let sampler = Sampler::new(model, flow, policy);
    per_path(n_paths, |p| {
        let mut row = Vec::new();
        let events = sampler.sample(x0, &mut stream_rng(seed, p as u64), &mut row)?;
        let log_girsanov = sampler.log_weight(x0, &events, &mut row)?;
        Ok(PathRecord {
            x0,
            events,
            log_girsanov,
        })
    })
}

/// `path_id,time,from,to`, one row per jump.
pub fn paths_to_csv(paths: &[PathRecord]) -> String {
    let mut s = String::from("path_id,time,from,to\n");
    for (p, path) in paths.iter().enumerate() {
        for e in &path.events {
            let _ = writeln!(s, "{p},{},{},{}", e.time, e.from, e.to);
        }
    }
    s
}
