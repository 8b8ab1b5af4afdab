//! Forward Kolmogorov (master) equation for the controlled chain and the
//! Picard iteration on marginal flows that produces the mean-field law.
//!
//! Conventions shared by every solver in the crate:
//!
//! * feedback controls are piecewise constant in time, the row of node `k`
//!   acting on `[t_k, t_{k+1})`;
//! * the law entering the intensities is linearly interpolated between
//!   nodes (through [`MeanField`], which is linear in the law).
//!
//! The Monte Carlo samplers use the same conventions, so ODE and simulation
//! describe the same inhomogeneous chain.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlGrid, Intensity, MeanField};
use crate::space::{wasserstein2, Dist, StateSpace};

/// Uniform grid `t_k = k·T/n` on `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon {horizon} must be > 0")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("n_steps must be >= 1"));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.n_steps as f64
    }

    /// Interval containing `t` and the position inside it, `w ∈ [0, 1]`.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let x = (t / self.horizon * self.n_steps as f64).max(0.0);
        let k = (x.floor() as usize).min(self.n_steps - 1);
        (k, (x - k as f64).clamp(0.0, 1.0))
    }
}

/// One distribution per grid node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    grid: TimeGrid,
    dists: Vec<Dist>,
}

impl Flow {
    pub fn new(grid: TimeGrid, dists: Vec<Dist>) -> Result<Self> {
        if dists.len() != grid.n_nodes() {
            return Err(Error::invalid(format!(
                "flow has {} distributions for {} nodes",
                dists.len(),
                grid.n_nodes()
            )));
        }
        let n = dists[0].len();
        if let Some(d) = dists.iter().find(|d| d.len() != n) {
            return Err(Error::MismatchedSpace {
                left: n,
                right: d.len(),
            });
        }
        Ok(Self { grid, dists })
    }

    pub fn constant(grid: TimeGrid, dist: &Dist) -> Self {
        Self {
            grid,
            dists: vec![dist.clone(); grid.n_nodes()],
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn space(&self) -> StateSpace {
        self.dists[0].space()
    }

    pub fn at(&self, k: usize) -> &Dist {
        &self.dists[k]
    }

    pub fn dists(&self) -> &[Dist] {
        &self.dists
    }

    pub fn terminal(&self) -> &Dist {
        self.dists.last().expect("flow is nonempty")
    }

    pub fn mean_fields(&self) -> Vec<MeanField> {
        self.dists.iter().map(MeanField::of).collect()
    }

    /// `sup_k W₂(self_k, other_k)`.
    pub fn sup_w2(&self, other: &Flow) -> Result<f64> {
        if self.dists.len() != other.dists.len() {
            return Err(Error::invalid("flows live on different time grids"));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.dists.iter().zip(&other.dists) {
            worst = worst.max(wasserstein2(a, b)?);
        }
        Ok(worst)
    }

    /// `t,state,prob` rows, one per node and state.
    /// `max_{k,i} |μ_k(i) − ν_k(i)|`
    pub fn max_abs_difference(&self, other: &Flow) -> f64 {
        self.dists
            .iter()
            .zip(&other.dists)
            .flat_map(|(a, b)| a.probs().iter().zip(b.probs()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,state,prob\n");
        for (k, d) in self.dists.iter().enumerate() {
            let t = self.grid.time(k);
            for (i, p) in d.probs().iter().enumerate() {
                let _ = writeln!(out, "{t},{i},{p}");
            }
        }
        out
    }
}

/// Markovian feedback `(node, state) ↦` index into a [`ControlGrid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackControl {
    grid: ControlGrid,
    table: Vec<Vec<usize>>,
}

impl FeedbackControl {
    pub fn new(grid: ControlGrid, table: Vec<Vec<usize>>) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::invalid("feedback table is empty"));
        }
        let width = table[0].len();
        for row in &table {
            if row.len() != width {
                return Err(Error::invalid("feedback table rows differ in length"));
            }
            if let Some(k) = row.iter().find(|&&k| k >= grid.len()) {
                return Err(Error::invalid(format!(
                    "feedback index {k} outside a grid of {} points",
                    grid.len()
                )));
            }
        }
        Ok(Self { grid, table })
    }

    pub fn constant(grid: ControlGrid, time: TimeGrid, space: StateSpace, index: usize) -> Result<Self> {
        Self::new(grid, vec![vec![index; space.len()]; time.n_nodes()])
    }

    /// The control of a player without influence.
    pub fn inert(time: TimeGrid, space: StateSpace) -> Self {
        Self {
            grid: ControlGrid::inert(),
            table: vec![vec![0; space.len()]; time.n_nodes()],
        }
    }

    /// Independent uniform grid index at every `(node, state)`.
    pub fn random(grid: ControlGrid, time: TimeGrid, space: StateSpace, rng: &mut impl Rng) -> Self {
        let m = grid.len();
        let table = (0..time.n_nodes())
            .map(|_| (0..space.len()).map(|_| rng.random_range(0..m)).collect())
            .collect();
        Self { grid, table }
    }

    pub fn grid(&self) -> &ControlGrid {
        &self.grid
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.table
    }

    pub fn index(&self, node: usize, state: usize) -> usize {
        self.table[node][state]
    }

    pub fn point(&self, node: usize, state: usize) -> &[f64] {
        self.grid.point(self.table[node][state])
    }
}

/// The controls of both players; `v` is inert for one-player problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub u: FeedbackControl,
    pub v: FeedbackControl,
}

impl Policy {
    pub fn new(u: FeedbackControl, v: FeedbackControl) -> Self {
        Self { u, v }
    }

    pub fn single(u: FeedbackControl, time: TimeGrid, space: StateSpace) -> Self {
        Self {
            u,
            v: FeedbackControl::inert(time, space),
        }
    }

    /// Constant inert controls for models without control inputs.
    pub fn uncontrolled(time: TimeGrid, space: StateSpace) -> Self {
        Self {
            u: FeedbackControl::inert(time, space),
            v: FeedbackControl::inert(time, space),
        }
    }
}

/// Intensities of the chain driven by `policy` with the law frozen at `flow`.
pub struct Dynamics<'a, M: Intensity + ?Sized> {
    model: &'a M,
    grid: TimeGrid,
    mean_fields: Vec<MeanField>,
    policy: &'a Policy,
}

impl<'a, M: Intensity + ?Sized> Dynamics<'a, M> {
    pub fn new(model: &'a M, flow: &Flow, policy: &'a Policy) -> Self {
        Self {
            model,
            grid: flow.grid(),
            mean_fields: flow.mean_fields(),
            policy,
        }
    }

    pub fn model(&self) -> &'a M {
        self.model
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn policy(&self) -> &'a Policy {
        self.policy
    }

    /// Law statistics at position `w` of interval `k`.
    pub fn mean_field(&self, k: usize, w: f64) -> MeanField {
        MeanField::lerp(&self.mean_fields[k], &self.mean_fields[k + 1], w)
    }

    pub fn node_mean_field(&self, k: usize) -> &MeanField {
        &self.mean_fields[k]
    }

    /// Rates out of `i` inside interval `k`, in `model.targets(i)` order.
    pub fn row(&self, k: usize, w: f64, i: usize, out: &mut Vec<f64>) {
        let t = self.grid.time(k) + w * self.grid.dt();
        let mf = self.mean_field(k, w);
        self.model.row(
            t,
            i,
            &mf,
            self.policy.u.point(k, i),
            self.policy.v.point(k, i),
            out,
        );
    }

    pub fn targets(&self, i: usize) -> &[usize] {
        self.model.targets(i)
    }

    /// Per-state upper bound on the total exit rate over the horizon. Rates
    /// are affine in `w` on each interval, so endpoint maxima suffice.
    pub fn exit_rate_bounds(&self) -> Vec<f64> {
        let n = self.model.space().len();
        let mut bounds = vec![0.0f64; n];
        let mut row = Vec::new();
        for k in 0..self.grid.n_steps() {
            for (i, b) in bounds.iter_mut().enumerate() {
                for w in [0.0, 1.0] {
                    self.row(k, w, i, &mut row);
                    *b = b.max(row.iter().sum());
                }
            }
        }
        bounds
    }
}

/// One-step scheme for the forward and backward ODEs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Rk4,
    Euler,
}

/// Negative excursion tolerated before renormalization.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

fn master_rhs<M: Intensity + ?Sized>(
    dynamics: &Dynamics<'_, M>,
    k: usize,
    w: f64,
    mu: &[f64],
    out: &mut [f64],
    row: &mut Vec<f64>,
) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for (i, &p) in mu.iter().enumerate() {
        dynamics.row(k, w, i, row);
        for (&j, &r) in dynamics.targets(i).iter().zip(row.iter()) {
            let flux = p * r;
            out[j] += flux;
            out[i] -= flux;
        }
    }
}

/// Integrates `dμ_j/dt = Σ_i μ_i λ_ij − μ_j Σ_k λ_jk` from `μ₀ = ξ` with the
/// law inside the intensities frozen at `frozen`.
pub fn linear_forward<M: Intensity + ?Sized>(
    model: &M,
    frozen: &Flow,
    policy: &Policy,
    xi: &Dist,
    scheme: Scheme,
) -> Result<Flow> {
    if xi.len() != model.space().len() || frozen.space().len() != xi.len() {
        return Err(Error::MismatchedSpace {
            left: model.space().len(),
            right: xi.len(),
        });
    }
    let dynamics = Dynamics::new(model, frozen, policy);
    let grid = frozen.grid();
    let dt = grid.dt();
    let n = xi.len();
    let mut dists = Vec::with_capacity(grid.n_nodes());
    dists.push(xi.clone());
    let mut row = Vec::new();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for k in 0..grid.n_steps() {
        let mu = dists[k].probs().to_vec();
        let next: Vec<f64> = match scheme {
            Scheme::Euler => {
                master_rhs(&dynamics, k, 0.0, &mu, &mut k1, &mut row);
                mu.iter().zip(&k1).map(|(m, d)| m + dt * d).collect()
            }
            Scheme::Rk4 => {
                master_rhs(&dynamics, k, 0.0, &mu, &mut k1, &mut row);
                for s in 0..n {
                    tmp[s] = mu[s] + 0.5 * dt * k1[s];
                }
                master_rhs(&dynamics, k, 0.5, &tmp, &mut k2, &mut row);
                for s in 0..n {
                    tmp[s] = mu[s] + 0.5 * dt * k2[s];
                }
                master_rhs(&dynamics, k, 0.5, &tmp, &mut k3, &mut row);
                for s in 0..n {
                    tmp[s] = mu[s] + dt * k3[s];
                }
                master_rhs(&dynamics, k, 1.0, &tmp, &mut k4, &mut row);
                (0..n)
                    .map(|s| mu[s] + dt / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s]))
                    .collect()
            }
        };
        if let Some((state, &value)) = next
            .iter()
            .enumerate()
            .find(|(_, &p)| p < -NEGATIVE_TOLERANCE)
        {
            return Err(Error::StepSize {
                t: grid.time(k + 1),
                state,
                value,
            });
        }
        dists.push(Dist::from_step(next));
    }
    Flow::new(grid, dists)
}

/// Largest per-state probability change between Picard iterates that is
/// treated as rounding noise.
pub const ROUNDING_FLOOR: f64 = 64.0 * f64::EPSILON;

/// Consecutive rounding-level iterates accepted as convergence.
const STALL_LIMIT: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation `ρ ∈ [0, 1)`: `μ ← (1−ρ)·Φ(μ) + ρ·μ`.
    pub damping: f64,
    pub scheme: Scheme,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            damping: 0.0,
            scheme: Scheme::Rk4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardDiagnostics {
    /// `sup_t W₂` between successive iterates.
    pub distances: Vec<f64>,
}

impl PicardDiagnostics {
    pub fn iterations(&self) -> usize {
        self.distances.len()
    }

    /// Geometric mean of successive distance ratios after `burn_in` iterates.
    pub fn contraction_ratio(&self, burn_in: usize) -> Option<f64> {
        let d: Vec<f64> = self
            .distances
            .iter()
            .skip(burn_in)
            .copied()
            .filter(|&x| x > 0.0)
            .collect();
        if d.len() < 2 {
            return None;
        }
        Some((d[d.len() - 1] / d[0]).powf(1.0 / (d.len() - 1) as f64))
    }
}

/// Picard iteration from the constant flow `ξ`.
pub fn picard_fixed_point<M: Intensity + ?Sized>(
    model: &M,
    policy: &Policy,
    xi: &Dist,
    grid: TimeGrid,
    opts: &PicardOptions,
) -> Result<(Flow, PicardDiagnostics)> {
    picard_from(model, policy, xi, Flow::constant(grid, xi), opts)
}

/// Picard iteration `Flow ← Φ(Flow)` from an arbitrary initial flow.
pub fn picard_from<M: Intensity + ?Sized>(
    model: &M,
    policy: &Policy,
    xi: &Dist,
    initial: Flow,
    opts: &PicardOptions,
) -> Result<(Flow, PicardDiagnostics)> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("picard tolerance must be > 0"));
    }
    if !(0.0..1.0).contains(&opts.damping) {
        return Err(Error::invalid("damping must lie in [0, 1)"));
    }
    let mut current = initial;
    let mut distances = Vec::new();
    if model.is_mean_field_free() {
        // Φ ignores its argument: the first image is the fixed point.
        let flow = linear_forward(model, &current, policy, xi, opts.scheme)?;
        distances.push(0.0);
        return Ok((flow, PicardDiagnostics { distances }));
    }
    let mut before: Option<Flow> = None;
    let mut stalled = 0;
    for _ in 0..opts.max_iter {
        let mut next = linear_forward(model, &current, policy, xi, opts.scheme)?;
        if opts.damping > 0.0 {
            let dists = next
                .dists
                .iter()
                .zip(&current.dists)
                .map(|(a, b)| a.mix(b, opts.damping))
                .collect();
            next = Flow::new(next.grid, dists)?;
        }
        let d = next.sup_w2(&current)?;
        distances.push(d);
        if d < opts.tol {
            return Ok((next, PicardDiagnostics { distances }));
        }
        // W₂ of pairs this close is dominated by rounding (W₂ ~ √Δp); such
        // iterates usually settle bit-exactly within a few more steps
        let noise = next.max_abs_difference(&current) <= ROUNDING_FLOOR;
        stalled = if noise { stalled + 1 } else { 0 };
        if before.as_ref() == Some(&next) {
            return if noise {
                Ok((next, PicardDiagnostics { distances }))
            } else {
                Err(Error::NonConvergence { distances })
            };
        }
        if stalled >= STALL_LIMIT {
            return Ok((next, PicardDiagnostics { distances }));
        }
        before = Some(std::mem::replace(&mut current, next));
    }
    Err(Error::NonConvergence { distances })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub sup_second_moment: f64,
    /// Largest mass on the top two states, a proxy for truncation error.
    pub sup_boundary_mass: f64,
    /// `Σ_k ½‖μ_{k+1} − μ_k‖₁`
    pub total_variation: f64,
    pub max_step_variation: f64,
}

pub fn flow_diagnostics(flow: &Flow) -> FlowReport {
    let n = flow.space().len();
    let mut report = FlowReport {
        sup_second_moment: 0.0,
        sup_boundary_mass: 0.0,
        total_variation: 0.0,
        max_step_variation: 0.0,
    };
    for d in flow.dists() {
        let p = d.probs();
        report.sup_second_moment = report.sup_second_moment.max(MeanField::of(d).m2);
        report.sup_boundary_mass = report.sup_boundary_mass.max(p[n - 1] + p[n - 2]);
    }
    for pair in flow.dists().windows(2) {
        let tv = 0.5
            * pair[0]
                .probs()
                .iter()
                .zip(pair[1].probs())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        report.total_variation += tv;
        report.max_step_variation = report.max_step_variation.max(tv);
    }
    report
}

/// Deterministic RNG for a `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{schlogl_first, ConstantRateModel, QMatrix};

    fn two_state(a: f64, b: f64) -> ConstantRateModel {
        ConstantRateModel::two_state(a, b, 1.0, 1.0).unwrap()
    }

    #[test]
    fn time_grid_locates_intervals() {
        let g = TimeGrid::new(2.0, 4).unwrap();
        assert_eq!(g.time(4), 2.0);
        assert_eq!(g.locate(0.0), (0, 0.0));
        assert_eq!(g.locate(0.75), (1, 0.5));
        assert_eq!(g.locate(2.0), (3, 1.0));
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn zero_rates_keep_flow_constant() {
        let m = ConstantRateModel::new(
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            QMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let xi = Dist::new(vec![0.3, 0.7]).unwrap();
        let policy = Policy::uncontrolled(grid, xi.space());
        let f = linear_forward(&m, &Flow::constant(grid, &xi), &policy, &xi, Scheme::Rk4).unwrap();
        assert!(f.dists().iter().all(|d| d == &xi));
    }

    #[test]
    fn two_state_closed_form() {
        let (a, b) = (1.3, 0.4);
        let m = two_state(a, b);
        let grid = TimeGrid::new(1.5, 300).unwrap();
        let xi = Dist::point_mass(StateSpace::new(1).unwrap(), 0).unwrap();
        let policy = Policy::uncontrolled(grid, xi.space());
        let f = linear_forward(&m, &Flow::constant(grid, &xi), &policy, &xi, Scheme::Rk4).unwrap();
        for k in 0..grid.n_nodes() {
            let t = grid.time(k);
            let exact = a / (a + b) * (1.0 - (-(a + b) * t).exp());
            assert!((f.at(k).probs()[1] - exact).abs() < 1e-10);
            assert!((f.at(k).probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_field_free_converges_immediately() {
        let s = StateSpace::new(10).unwrap();
        let m = schlogl_first(QMatrix::band(s, 2, 0.2).unwrap(), 1.0, 0.0, 0.0, 0.0).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let xi = Dist::point_mass(s, 2).unwrap();
        let policy = Policy::uncontrolled(grid, s);
        let (flow, diag) = picard_fixed_point(&m, &policy, &xi, grid, &PicardOptions::default()).unwrap();
        assert_eq!(diag.iterations(), 1);
        let again = linear_forward(&m, &flow, &policy, &xi, Scheme::Rk4).unwrap();
        assert_eq!(again.sup_w2(&flow).unwrap(), 0.0);
    }

    #[test]
    fn infinite_tolerance_returns_after_one_iteration() {
        let s = StateSpace::new(20).unwrap();
        let m = schlogl_first(QMatrix::band(s, 2, 0.1).unwrap(), 1.0, 0.05, 0.2, 0.02).unwrap();
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let xi = Dist::point_mass(s, 2).unwrap();
        let opts = PicardOptions {
            tol: f64::INFINITY,
            ..Default::default()
        };
        let (_, diag) = picard_fixed_point(&m, &Policy::uncontrolled(grid, s), &xi, grid, &opts).unwrap();
        assert_eq!(diag.iterations(), 1);
    }

    #[test]
    fn non_convergence_carries_distances() {
        let s = StateSpace::new(20).unwrap();
        let m = schlogl_first(QMatrix::band(s, 2, 0.1).unwrap(), 1.0, 0.05, 0.2, 0.02).unwrap();
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let xi = Dist::point_mass(s, 2).unwrap();
        let opts = PicardOptions {
            tol: 1e-300,
            max_iter: 3,
            ..Default::default()
        };
        match picard_fixed_point(&m, &Policy::uncontrolled(grid, s), &xi, grid, &opts) {
            Err(Error::NonConvergence { distances }) => assert_eq!(distances.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rounding_level_iterates_count_as_converged() {
        let s = StateSpace::new(20).unwrap();
        let m = schlogl_first(QMatrix::band(s, 2, 0.1).unwrap(), 1.0, 0.05, 0.2, 0.02).unwrap();
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let xi = Dist::point_mass(s, 2).unwrap();
        let policy = Policy::uncontrolled(grid, s);
        let tight = PicardOptions {
            tol: 1e-300,
            ..Default::default()
        };
        let (flow, diag) = picard_fixed_point(&m, &policy, &xi, grid, &tight).unwrap();
        let (reference, _) = picard_fixed_point(&m, &policy, &xi, grid, &PicardOptions::default()).unwrap();
        assert!(diag.iterations() < 40);
        assert!(flow.max_abs_difference(&reference) <= 1e-12);
        let again = linear_forward(&m, &flow, &policy, &xi, Scheme::Rk4).unwrap();
        assert!(again.max_abs_difference(&flow) <= ROUNDING_FLOOR);
    }

    #[test]
    fn coarse_step_reports_negative_probability() {
        let m = two_state(50.0, 50.0);
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let xi = Dist::point_mass(StateSpace::new(1).unwrap(), 0).unwrap();
        let policy = Policy::uncontrolled(grid, xi.space());
        let r = linear_forward(&m, &Flow::constant(grid, &xi), &policy, &xi, Scheme::Euler);
        assert!(matches!(r, Err(Error::StepSize { .. })));
    }

    #[test]
    fn diagnostics_on_static_flow() {
        let s = StateSpace::new(5).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let f = Flow::constant(grid, &Dist::point_mass(s, 0).unwrap());
        let r = flow_diagnostics(&f);
        assert_eq!(r.sup_second_moment, 0.0);
        assert_eq!(r.sup_boundary_mass, 0.0);
        assert_eq!(r.total_variation, 0.0);
    }

    #[test]
    fn flow_json_round_trip_is_bit_exact() {
        let s = StateSpace::new(20).unwrap();
        let m = schlogl_first(QMatrix::band(s, 2, 0.1).unwrap(), 1.0, 0.05, 0.2, 0.02).unwrap();
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let xi = Dist::truncated_poisson(s, 3.0).unwrap();
        let (flow, _) =
            picard_fixed_point(&m, &Policy::uncontrolled(grid, s), &xi, grid, &PicardOptions::default())
                .unwrap();
        let json = serde_json::to_string(&flow).unwrap();
        let back: Flow = serde_json::from_str(&json).unwrap();
        for (a, b) in flow.dists().iter().zip(back.dists()) {
            for (x, y) in a.probs().iter().zip(b.probs()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(flow.to_csv().lines().count(), 1 + 41 * 21);
    }
}
