//! Zero-sum risk-sensitive game between a minimizing player `u` and a
//! maximizing player `v` on finite grids.
//!
//! The lower game uses `max_v min_u H` pointwise, the upper game
//! `min_u max_v H`. Both are solved with the best-response loop of the
//! control module; Isaacs' condition is checked at the lower solution and
//! the two value fields are compared.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::{feynman_kac_backward, BackwardSystem, BsdeSolution, CostSpec};
use crate::control::{best_response_loop, hamiltonian_at, hamiltonian_matrix, select, terminal_gap, Selection, SolverOptions};
use crate::error::Result;
use crate::flow::{picard_fixed_point, stream_rng, FeedbackControl, Flow, Policy, Scheme, TimeGrid};
use crate::model::{ControlGrid, Intensity, MeanField};
use crate::space::Dist;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianPair {
    /// `max_v min_u H`
    pub lower: f64,
    pub lower_arg: (usize, usize),
    /// `min_u max_v H`
    pub upper: f64,
    pub upper_arg: (usize, usize),
}

impl HamiltonianPair {
    pub fn gap(&self) -> f64 {
        (self.upper - self.lower).abs()
    }
}

/// Pure-strategy max-min and min-max of the Hamiltonian over `U × V`.
#[allow(clippy::too_many_arguments)]
pub fn lower_upper_hamiltonians<M: Intensity + ?Sized>(
    model: &M,
    mu: &Dist,
    t: f64,
    i: usize,
    z: &[f64],
    grid_u: &ControlGrid,
    grid_v: &ControlGrid,
    cost: &CostSpec,
) -> HamiltonianPair {
    let mf = MeanField::of(mu);
    let m: Vec<Vec<f64>> = (0..grid_u.len())
        .map(|a| {
            (0..grid_v.len())
                .map(|b| hamiltonian_at(model, &mf, t, i, grid_u.point(a), grid_v.point(b), z, cost))
                .collect()
        })
        .collect();
    pair_of(&m)
}

fn pair_of(m: &[Vec<f64>]) -> HamiltonianPair {
    let lo = select(m, Selection::MaxMin);
    let hi = select(m, Selection::MinMax);
    HamiltonianPair {
        lower: lo.value,
        lower_arg: (lo.u, lo.v),
        upper: hi.value,
        upper_arg: (hi.u, hi.v),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsaacsReport {
    /// `sup |H_up − H_low|` over nodes and states.
    pub gap: f64,
    pub worst: (usize, usize),
    /// Per-node supremum over states.
    pub profile: Vec<f64>,
    /// `|max_v min_u h − min_u max_v h|`; costs at `T` carry no controls.
    pub terminal_gap: f64,
    /// Smallest `H_up − H_low`; negative values break weak duality.
    pub min_duality: f64,
}

/// Isaacs gap of the Hamiltonian along the jumps `Z` of a solution, with
/// the law frozen at `flow`.
pub fn isaacs_check<M: Intensity + ?Sized>(
    model: &M,
    flow: &Flow,
    grid_u: &ControlGrid,
    grid_v: &ControlGrid,
    cost: &CostSpec,
    z_field: &BsdeSolution,
) -> IsaacsReport {
    let sys = BackwardSystem::new(model, flow, cost, Scheme::Rk4);
    let nodes = flow.grid().n_nodes();
    let mut report = IsaacsReport {
        gap: 0.0,
        worst: (0, 0),
        profile: vec![0.0; nodes],
        terminal_gap: 0.0,
        min_duality: f64::INFINITY,
    };
    for k in 0..nodes {
        for i in 0..sys.n_states() {
            let m = hamiltonian_matrix(&sys, grid_u, grid_v, k, 0.0, i, z_field.z_row(k, i));
            let p = pair_of(&m);
            let gap = p.gap();
            report.min_duality = report.min_duality.min(p.upper - p.lower);
            report.profile[k] = report.profile[k].max(gap);
            if gap > report.gap {
                report.gap = gap;
                report.worst = (k, i);
            }
        }
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameOptions {
    pub solver: SolverOptions,
    /// Isaacs gaps below this count as equality.
    pub isaacs_tol: f64,
}

impl Default for GameOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            isaacs_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameResult {
    pub u_hat: FeedbackControl,
    pub v_hat: FeedbackControl,
    pub flow_hat: Flow,
    /// Lower-game value field.
    pub sol: BsdeSolution,
    pub upper_sol: BsdeSolution,
    pub upper_flow: Flow,
    pub isaacs: IsaacsReport,
    pub isaacs_gap: f64,
    /// `sup |Y_low − Y_up|`
    pub value_gap: f64,
    /// `min (Y_up − Y_low)`
    pub ordering_margin: f64,
    pub terminal_gap: f64,
    /// False when the Isaacs gap exceeds the tolerance: no value at the
    /// grid resolution, only `Y_low ≤ Y_up`.
    pub has_value: bool,
    pub lower_gaps: Vec<f64>,
    pub upper_gaps: Vec<f64>,
}

impl GameResult {
    pub fn policy(&self) -> Policy {
        Policy::new(self.u_hat.clone(), self.v_hat.clone())
    }
}

/// Solves the lower and the upper game and checks Isaacs' condition.
pub fn solve_game<M: Intensity + ?Sized>(
    model: &M,
    grid_u: &ControlGrid,
    grid_v: &ControlGrid,
    cost: &CostSpec,
    xi: &Dist,
    time: TimeGrid,
    opts: &GameOptions,
) -> Result<GameResult> {
    let lower = best_response_loop(model, cost, grid_u, grid_v, Selection::MaxMin, xi, time, &opts.solver)?;
    let upper = best_response_loop(model, cost, grid_u, grid_v, Selection::MinMax, xi, time, &opts.solver)?;
    let isaacs = isaacs_check(model, &lower.flow, grid_u, grid_v, cost, &lower.solution);
    let mut value_gap = 0.0f64;
    let mut ordering_margin = f64::INFINITY;
    for (a, b) in lower.solution.y_field().iter().zip(upper.solution.y_field()) {
        for (yl, yu) in a.iter().zip(b) {
            value_gap = value_gap.max((yl - yu).abs());
            ordering_margin = ordering_margin.min(yu - yl);
        }
    }
    Ok(GameResult {
        terminal_gap: terminal_gap(&lower.solution, &lower.flow, cost),
        has_value: isaacs.gap < opts.isaacs_tol,
        isaacs_gap: isaacs.gap,
        isaacs,
        u_hat: lower.policy.u,
        v_hat: lower.policy.v,
        flow_hat: lower.flow,
        sol: lower.solution,
        upper_sol: upper.solution,
        upper_flow: upper.flow,
        value_gap,
        ordering_margin,
        lower_gaps: lower.gaps,
        upper_gaps: upper.gaps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub label: String,
    /// `Y^{dev}(0, x₀)`
    pub value: f64,
    /// Signed margin; negative means the deviation pays off.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleReport {
    pub value: f64,
    /// `min_v (Y − Y^{û,v})(0, x₀)`; `None` when `V` is a singleton.
    pub lower_margin: Option<f64>,
    /// `min_u (Y^{u,v̂} − Y)(0, x₀)`; `None` when `U` is a singleton.
    pub upper_margin: Option<f64>,
    pub deviations: Vec<Deviation>,
    pub passed: bool,
}

pub const SADDLE_TOLERANCE: f64 = 1e-6;

/// Unilateral-deviation sweep: `n_deviations` random feedback controls per
/// player plus the equilibrium control itself, each under its own flow.
#[allow(clippy::too_many_arguments)]
pub fn verify_saddle<M: Intensity + ?Sized>(
    model: &M,
    result: &GameResult,
    cost: &CostSpec,
    xi: &Dist,
    x0: usize,
    n_deviations: usize,
    seed: u64,
    opts: &GameOptions,
) -> Result<SaddleReport> {
    let time = result.flow_hat.grid();
    let space = model.space();
    let value = result.sol.y(0, x0);
    // (label, policy, deviating player is v)
    let mut jobs: Vec<(String, Policy, bool)> = Vec::new();
    let (ug, vg) = (result.u_hat.grid(), result.v_hat.grid());
    if vg.len() > 1 {
        jobs.push(("v_hat".into(), result.policy(), true));
        for r in 0..n_deviations {
            let mut rng = stream_rng(seed, 2 * r as u64 + 1);
            let v = FeedbackControl::random(vg.clone(), time, space, &mut rng);
            jobs.push((format!("v_random[{r}]"), Policy::new(result.u_hat.clone(), v), true));
        }
    }
    if ug.len() > 1 {
        jobs.push(("u_hat".into(), result.policy(), false));
        for r in 0..n_deviations {
            let mut rng = stream_rng(seed, 2 * r as u64);
            let u = FeedbackControl::random(ug.clone(), time, space, &mut rng);
            jobs.push((format!("u_random[{r}]"), Policy::new(u, result.v_hat.clone()), false));
        }
    }
    let evaluated = jobs
        .into_par_iter()
        .map(|(label, policy, is_v)| -> Result<(Deviation, bool)> {
            let (flow, _) = picard_fixed_point(model, &policy, xi, time, &opts.solver.picard)?;
            let sol = feynman_kac_backward(model, &flow, &policy, cost, opts.solver.scheme)?;
            let dev = sol.y(0, x0);
            let margin = if is_v { value - dev } else { dev - value };
            Ok((
                Deviation {
                    label,
                    value: dev,
                    margin,
                },
                is_v,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = |want_v: bool| {
        evaluated
            .iter()
            .filter(|(_, is_v)| *is_v == want_v)
            .map(|(d, _)| d.margin)
            .reduce(f64::min)
    };
    let lower_margin = worst(true);
    let upper_margin = worst(false);
    let passed = lower_margin.is_none_or(|m| m >= -SADDLE_TOLERANCE) && upper_margin.is_none_or(|m| m >= -SADDLE_TOLERANCE);
    Ok(SaddleReport {
        value,
        lower_margin,
        upper_margin,
        deviations: evaluated.into_iter().map(|(d, _)| d).collect(),
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::{RunningCost, TerminalCost};
    use crate::model::ConstantRateModel;
    use crate::space::StateSpace;

    #[test]
    fn zero_jumps_reduce_to_the_cost_matrix() {
        let m = ConstantRateModel::two_state(2.0, 1.0, 1.0, 1.0).unwrap();
        let mu = Dist::uniform(StateSpace::new(1).unwrap());
        // f = u·v on {−1, 1}²: matching pennies, no pure saddle
        let cost = CostSpec::new(
            RunningCost {
                interaction: 1.0,
                bound: 5.0,
                ..Default::default()
            },
            TerminalCost::default(),
        )
        .unwrap();
        let g = ControlGrid::scalar(&[-1.0, 1.0]).unwrap();
        let p = lower_upper_hamiltonians(&m, &mu, 0.0, 0, &[0.0], &g, &g, &cost);
        assert_eq!((p.lower, p.upper), (-1.0, 1.0));
        assert_eq!(p.gap(), 2.0);
    }

    #[test]
    fn separable_cost_has_no_gap() {
        let m = ConstantRateModel::two_state(2.0, 1.0, 1.0, 1.0).unwrap();
        let mu = Dist::uniform(StateSpace::new(1).unwrap());
        let cost = CostSpec::new(
            RunningCost {
                u_quadratic: vec![1.0],
                v_linear: vec![0.5],
                bound: 5.0,
                ..Default::default()
            },
            TerminalCost::default(),
        )
        .unwrap();
        let g = ControlGrid::scalar(&[-1.0, 0.0, 1.0]).unwrap();
        let p = lower_upper_hamiltonians(&m, &mu, 0.0, 0, &[0.3], &g, &g, &cost);
        assert_eq!(p.lower, p.upper);
        assert_eq!(p.lower_arg, (1, 2));
        let single = ControlGrid::scalar(&[0.0]).unwrap();
        let q = lower_upper_hamiltonians(&m, &mu, 0.0, 0, &[0.3], &single, &single, &cost);
        assert_eq!(q.lower, q.upper);
    }
}
