use std::fmt::Write;

use serde::Serialize;

use super::config::{ExperimentConfig, Setup};
use super::verify::run_battery;
use super::{Command, Run, Status};
use crate::bsde::{entropic_backward, BsdeSolution};
use crate::control::{solve_optimal, verify_optimality, OptimalityReport};
use crate::error::Result;
use crate::flow::{
    flow_diagnostics, linear_forward, picard_fixed_point, FeedbackControl, Flow, FlowReport, Policy, TimeGrid,
};
use crate::game::{solve_game, verify_saddle, SaddleReport};
use crate::model::Intensity;
use crate::simulate::{
    likelihood_ratio_mean, martingale_diagnostic, paths_to_csv, payoff_mc_direct, payoff_mc_girsanov,
    sample_paths, MartingaleReport, McEstimate,
};

/// Gap allowed between the last two flows of the best-response loop.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-6;

/// Standard errors allowed between Monte Carlo and deterministic values.
pub const MC_SIGMAS: f64 = 3.0;

/// The first grid point for every player at every node.
pub(crate) fn fixed_policy(s: &Setup) -> Result<Policy> {
    let space = s.model.space();
    Ok(Policy::new(
        FeedbackControl::constant(s.grid_u.clone(), s.time, space, 0)?,
        FeedbackControl::constant(s.grid_v.clone(), s.time, space, 0)?,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct ControlTable {
    pub points: Vec<Vec<f64>>,
    /// Grid index per node (rows) and state (columns).
    pub index: Vec<Vec<usize>>,
}

impl ControlTable {
    fn of(u: &FeedbackControl) -> Self {
        Self {
            points: u.grid().points().to_vec(),
            index: u.table().to_vec(),
        }
    }
}

fn control_csv(u: &FeedbackControl, time: TimeGrid) -> String {
    let mut out = String::from("t,state,index");
    for d in 0..u.grid().dim() {
        let _ = write!(out, ",u{d}");
    }
    out.push('\n');
    for (k, row) in u.table().iter().enumerate() {
        for (i, &a) in row.iter().enumerate() {
            let _ = write!(out, "{},{i},{a}", time.time(k));
            for x in u.grid().point(a) {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowOutput {
    pub iterations: usize,
    pub distances: Vec<f64>,
    /// sup-`W₂` move of one further application of the flow map.
    pub extra_step: f64,
    pub diagnostics: FlowReport,
    pub terminal_mean: f64,
    pub terminal: Vec<f64>,
    pub rows: usize,
}

pub(crate) fn solve_flow(s: &Setup, policy: &Policy) -> Result<(Flow, FlowOutput)> {
    let (flow, diag) = picard_fixed_point(&s.model, policy, &s.xi, s.time, &s.solver.picard)?;
    let again = linear_forward(&s.model, &flow, policy, &s.xi, s.solver.picard.scheme)?;
    let out = FlowOutput {
        iterations: diag.iterations(),
        extra_step: again.sup_w2(&flow)?,
        distances: diag.distances,
        diagnostics: flow_diagnostics(&flow),
        terminal_mean: flow.terminal().mean(),
        terminal: flow.terminal().probs().to_vec(),
        rows: flow.grid().n_nodes() * flow.space().len(),
    };
    Ok((flow, out))
}

pub fn cmd_flow(config: &ExperimentConfig) -> Result<Run> {
    let s = config.setup()?;
    let (flow, out) = solve_flow(&s, &fixed_policy(&s)?)?;
    let files = vec![("flow.csv".to_string(), flow.to_csv())];
    Run::new(Command::Flow, config, s.seed, Status::Ok, out, files)
}

#[derive(Clone, Debug, Serialize)]
pub struct AgreementRow {
    pub left: String,
    pub right: String,
    pub difference: f64,
    /// Root sum of squared standard errors.
    pub combined_se: f64,
    pub passed: bool,
}

fn agreement(values: &[(&str, f64, f64)]) -> Vec<AgreementRow> {
    let mut rows = Vec::new();
    for (a, &(na, va, sa)) in values.iter().enumerate() {
        for &(nb, vb, sb) in &values[a + 1..] {
            let difference = va - vb;
            let combined_se = sa.hypot(sb);
            rows.push(AgreementRow {
                left: na.to_string(),
                right: nb.to_string(),
                difference,
                combined_se,
                passed: difference.abs() <= MC_SIGMAS * combined_se,
            });
        }
    }
    rows
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateOutput {
    pub flow_iterations: usize,
    /// `Y(0, x₀)` of the entropic backward equation.
    pub y0: f64,
    /// `e^{Y(0, x₀)}`
    pub ode_payoff: f64,
    pub direct: McEstimate,
    pub girsanov: McEstimate,
    /// Monte Carlo mean of `L_T` under the reference chain.
    pub likelihood_ratio: McEstimate,
    pub likelihood_ratio_deviation: f64,
    pub agreement: Vec<AgreementRow>,
    pub martingale: MartingaleReport,
}

pub(crate) struct Simulation {
    pub flow: Flow,
    pub sol: BsdeSolution,
    pub output: SimulateOutput,
}

pub(crate) fn simulate(s: &Setup, policy: &Policy) -> Result<Simulation> {
    let (flow, diag) = picard_fixed_point(&s.model, policy, &s.xi, s.time, &s.solver.picard)?;
    let n = s.n_paths;
    let sol = entropic_backward(&s.model, &flow, policy, &s.cost, s.solver.scheme)?;
    let y0 = sol.y(0, s.x0);
    let direct = payoff_mc_direct(&s.model, &flow, policy, &s.cost, s.x0, n, s.seed)?;
    let girsanov = payoff_mc_girsanov(&s.model, &flow, policy, &s.cost, s.x0, n, s.seed)?;
    let lr = likelihood_ratio_mean(&s.model, &flow, policy, s.x0, n, s.seed, None)?;
    let martingale = martingale_diagnostic(&s.model, &flow, policy, s.x0, n, s.seed)?;
    let ode_payoff = y0.exp();
    let output = SimulateOutput {
        flow_iterations: diag.iterations(),
        y0,
        ode_payoff,
        agreement: agreement(&[
            ("ode", ode_payoff, 0.0),
            ("direct", direct.mean, direct.std_error),
            ("girsanov", girsanov.mean, girsanov.std_error),
        ]),
        likelihood_ratio_deviation: (lr.mean - 1.0).abs(),
        direct,
        girsanov,
        likelihood_ratio: lr,
        martingale,
    };
    Ok(Simulation { flow, sol, output })
}

pub fn cmd_simulate(config: &ExperimentConfig) -> Result<Run> {
    let s = config.setup()?;
    let policy = fixed_policy(&s)?;
    let sim = simulate(&s, &policy)?;
    let mut files = vec![
        ("flow.csv".to_string(), sim.flow.to_csv()),
        ("bsde.csv".to_string(), sim.sol.to_csv()),
    ];
    if config.mc.path_dump > 0 {
        let paths = sample_paths(&s.model, &sim.flow, &policy, s.x0, config.mc.path_dump, s.seed)?;
        files.push(("paths.csv".to_string(), paths_to_csv(&paths)));
    }
    Run::new(Command::Simulate, config, s.seed, Status::Ok, sim.output, files)
}

#[derive(Clone, Debug, Serialize)]
pub struct McCheck {
    pub estimate: McEstimate,
    /// `ln` of the estimate and its delta-method standard error.
    pub log_mean: f64,
    pub log_std_error: f64,
    pub y0: f64,
    pub passed: bool,
}

impl McCheck {
    fn new(estimate: McEstimate, y0: f64) -> Self {
        let log_mean = estimate.mean.ln();
        let log_std_error = estimate.std_error / estimate.mean;
        Self {
            passed: (log_mean - y0).abs() <= MC_SIGMAS * log_std_error,
            estimate,
            log_mean,
            log_std_error,
            y0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ControlOutput {
    pub u_star: ControlTable,
    pub y0: f64,
    pub consistency_gap: f64,
    pub hamiltonian_gap: f64,
    pub terminal_gap: f64,
    pub outer_gaps: Vec<f64>,
    pub unsettled_nodes: usize,
    pub optimality: OptimalityReport,
    pub mc: McCheck,
}

pub fn cmd_control(config: &ExperimentConfig) -> Result<Run> {
    let s = config.setup()?;
    let r = solve_optimal(&s.model, &s.grid_u, &s.cost, &s.xi, s.time, &s.solver)?;
    let optimality = verify_optimality(
        &s.model,
        &r,
        &s.cost,
        &s.xi,
        s.x0,
        config.mc.n_random_controls,
        s.seed,
        &s.solver,
    )?;
    let policy = r.policy();
    let estimate = payoff_mc_direct(&s.model, &r.flow_star, &policy, &s.cost, s.x0, s.n_paths, s.seed)?;
    let y0 = r.sol_star.y(0, s.x0);
    let mc = McCheck::new(estimate, y0);

    let mut failed = Vec::new();
    if r.hamiltonian_gap != 0.0 {
        failed.push("hamiltonian_gap".to_string());
    }
    if !(r.consistency_gap < CONSISTENCY_TOLERANCE) {
        failed.push("consistency_gap".to_string());
    }
    if !optimality.passed {
        failed.push("optimality_sweep".to_string());
    }
    if !mc.passed {
        failed.push("mc_payoff".to_string());
    }
    let files = vec![
        ("control.csv".to_string(), control_csv(&r.u_star, s.time)),
        ("bsde.csv".to_string(), r.sol_star.to_csv()),
        ("flow.csv".to_string(), r.flow_star.to_csv()),
    ];
    let out = ControlOutput {
        u_star: ControlTable::of(&r.u_star),
        y0,
        consistency_gap: r.consistency_gap,
        hamiltonian_gap: r.hamiltonian_gap,
        terminal_gap: r.terminal_gap,
        outer_gaps: r.outer_gaps,
        unsettled_nodes: r.unsettled_nodes,
        optimality,
        mc,
    };
    Run::new(Command::Control, config, s.seed, Status::from_failures(failed), out, files)
}

#[derive(Clone, Debug, Serialize)]
pub struct GameOutput {
    pub u_hat: ControlTable,
    pub v_hat: ControlTable,
    pub y0: f64,
    pub upper_y0: f64,
    pub isaacs_gap: f64,
    pub isaacs_profile: Vec<f64>,
    pub min_duality: f64,
    pub value_gap: f64,
    pub ordering_margin: f64,
    pub terminal_gap: f64,
    pub has_value: bool,
    pub lower_gaps: Vec<f64>,
    pub upper_gaps: Vec<f64>,
    /// Absent when the game has no value at the grid resolution.
    pub saddle: Option<SaddleReport>,
}

pub fn cmd_game(config: &ExperimentConfig) -> Result<Run> {
    let s = config.setup()?;
    let r = solve_game(&s.model, &s.grid_u, &s.grid_v, &s.cost, &s.xi, s.time, &s.game)?;
    let saddle = if r.has_value {
        Some(verify_saddle(
            &s.model,
            &r,
            &s.cost,
            &s.xi,
            s.x0,
            config.mc.n_random_controls,
            s.seed,
            &s.game,
        )?)
    } else {
        None
    };
    let status = if !r.has_value {
        Status::NoValue {
            isaacs_gap: r.isaacs_gap,
        }
    } else {
        let mut failed = Vec::new();
        if r.isaacs.min_duality < 0.0 {
            failed.push("weak_duality".to_string());
        }
        if r.ordering_margin < 0.0 {
            failed.push("value_ordering".to_string());
        }
        if saddle.as_ref().is_some_and(|x| !x.passed) {
            failed.push("saddle".to_string());
        }
        Status::from_failures(failed)
    };
    let files = vec![
        ("control_u.csv".to_string(), control_csv(&r.u_hat, s.time)),
        ("control_v.csv".to_string(), control_csv(&r.v_hat, s.time)),
        ("bsde.csv".to_string(), r.sol.to_csv()),
        ("bsde_upper.csv".to_string(), r.upper_sol.to_csv()),
        ("flow.csv".to_string(), r.flow_hat.to_csv()),
    ];
    let out = GameOutput {
        u_hat: ControlTable::of(&r.u_hat),
        v_hat: ControlTable::of(&r.v_hat),
        y0: r.sol.y(0, s.x0),
        upper_y0: r.upper_sol.y(0, s.x0),
        isaacs_gap: r.isaacs_gap,
        isaacs_profile: r.isaacs.profile.clone(),
        min_duality: r.isaacs.min_duality,
        value_gap: r.value_gap,
        ordering_margin: r.ordering_margin,
        terminal_gap: r.terminal_gap,
        has_value: r.has_value,
        lower_gaps: r.lower_gaps,
        upper_gaps: r.upper_gaps,
        saddle,
    };
    Run::new(Command::Game, config, s.seed, status, out, files)
}

pub fn cmd_verify(config: &ExperimentConfig) -> Result<Run> {
    let s = config.setup()?;
    let out = run_battery(config, &s)?;
    let failed = out.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    Run::new(Command::Verify, config, s.seed, Status::from_failures(failed), out, Vec::new())
}
