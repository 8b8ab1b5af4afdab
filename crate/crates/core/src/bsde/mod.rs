//! Markov-chain BSDEs in their Markovian reduction.
//!
//! With Markovian data the solution of the entropic BSDE is a field
//! `Y(t, i)` and the martingale integrand is `Z(t, i, j) = Y(t, j) − Y(t, i)`.
//! Two independent backward ODE systems are integrated:
//!
//! * the **linear** (Feynman–Kac) form for `v = e^Y`,
//!   `−∂ₜv_i = f_i v_i + Σ_j λ_ij (v_j − v_i)`, `v(T, i) = e^{h(i, μ_T)}`;
//! * the **entropic** form for `Y`,
//!   `−∂ₜY_i = H(t, i, u, Z_i·) + Σ_j g_ij (e^{Z_ij} − 1)`, `Y(T, i) = h(i, μ_T)`,
//!   where `H` is the Hamiltonian of [`crate::control::hamiltonian`].
//!
//! They are related by the exponential transform, which the tests check.

mod balanced;
mod comparison;
mod cost;

pub use balanced::{balanced_decomposition, BalancedDecomposition, DriverMode, FamilyMember};
pub use comparison::{comparison_check, ComparisonReport, COMPARISON_TOLERANCE};
pub use cost::{CostSpec, RunningCost, TerminalCost};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::control::hamiltonian_value;
use crate::error::{Error, Result};
use crate::flow::{Flow, Policy, Scheme, TimeGrid};
use crate::model::{ControlGrid, Intensity, MeanField};

/// Value field of a backward solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsdeSolution {
    grid: TimeGrid,
    /// `Y[node][state]`
    y: Vec<Vec<f64>>,
    /// `v = e^Y`
    v: Vec<Vec<f64>>,
    /// Active destinations per state; `z` is stored along them.
    targets: Vec<Vec<usize>>,
    /// `Z[node][state][m] = Y[node][targets[state][m]] − Y[node][state]`
    z: Vec<Vec<Vec<f64>>>,
}

impl BsdeSolution {
    pub(crate) fn from_y(grid: TimeGrid, y: Vec<Vec<f64>>, targets: Vec<Vec<usize>>) -> Self {
        let v = y.iter().map(|r| r.iter().map(|x| x.exp()).collect()).collect();
        Self::assemble(grid, y, v, targets)
    }

    fn assemble(
        grid: TimeGrid,
        y: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        targets: Vec<Vec<usize>>,
    ) -> Self {
        let z = y
            .iter()
            .map(|row| {
                targets
                    .iter()
                    .enumerate()
                    .map(|(i, ts)| ts.iter().map(|&j| row[j] - row[i]).collect())
                    .collect()
            })
            .collect();
        Self {
            grid,
            y,
            v,
            targets,
            z,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn y(&self, node: usize, state: usize) -> f64 {
        self.y[node][state]
    }

    pub fn y_field(&self) -> &[Vec<f64>] {
        &self.y
    }

    pub fn v(&self, node: usize, state: usize) -> f64 {
        self.v[node][state]
    }

    pub fn targets(&self, state: usize) -> &[usize] {
        &self.targets[state]
    }

    /// `Z` along the active destinations of `state`.
    pub fn z_row(&self, node: usize, state: usize) -> &[f64] {
        &self.z[node][state]
    }

    pub fn n_states(&self) -> usize {
        self.targets.len()
    }

    /// `sup |Y|`
    pub fn sup_abs(&self) -> f64 {
        self.y
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Largest `|Z(t,i,j) − (Y(t,j) − Y(t,i))|` over stored entries.
    pub fn z_consistency(&self) -> f64 {
        let mut worst = 0.0f64;
        for (row, zs) in self.y.iter().zip(&self.z) {
            for (i, ts) in self.targets.iter().enumerate() {
                for (&j, z) in ts.iter().zip(&zs[i]) {
                    worst = worst.max((z - (row[j] - row[i])).abs());
                }
            }
        }
        worst
    }

    /// `sup |Y − other.Y|` over all nodes.
    pub fn sup_distance(&self, other: &BsdeSolution) -> f64 {
        self.y
            .iter()
            .flatten()
            .zip(other.y.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `ln|v| ≤ ‖h‖_∞ + T‖f‖_∞` slack; negative means the bound fails.
    pub fn bound_slack(&self, cost: &CostSpec) -> f64 {
        cost.h_bound() + self.grid.horizon() * cost.f_bound() - self.sup_abs()
    }

    /// `t,state,Y,v` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,state,Y,v\n");
        for (k, (ys, vs)) in self.y.iter().zip(&self.v).enumerate() {
            let t = self.grid.time(k);
            for (i, (y, v)) in ys.iter().zip(vs).enumerate() {
                let _ = writeln!(out, "{t},{i},{y},{v}");
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Form {
    /// ODE for `Y` with the entropic driver.
    Entropic,
    /// ODE for `v = e^Y`.
    Linear,
}

/// Backward ODE machinery with the law frozen at a flow.
pub(crate) struct BackwardSystem<'a, M: Intensity + ?Sized> {
    model: &'a M,
    grid: TimeGrid,
    mean_fields: Vec<MeanField>,
    cost: &'a CostSpec,
    g_rows: Vec<Vec<f64>>,
    scheme: Scheme,
}

/// Control points in force on one interval, one per state.
pub(crate) struct StepControls<'b> {
    pub u: Vec<&'b [f64]>,
    pub v: Vec<&'b [f64]>,
}

impl<'b> StepControls<'b> {
    pub fn from_policy(policy: &'b Policy, k: usize, n: usize) -> Self {
        Self {
            u: (0..n).map(|i| policy.u.point(k, i)).collect(),
            v: (0..n).map(|i| policy.v.point(k, i)).collect(),
        }
    }

    pub fn from_indices(ug: &'b ControlGrid, vg: &'b ControlGrid, ui: &[usize], vi: &[usize]) -> Self {
        Self {
            u: ui.iter().map(|&a| ug.point(a)).collect(),
            v: vi.iter().map(|&b| vg.point(b)).collect(),
        }
    }
}

impl<'a, M: Intensity + ?Sized> BackwardSystem<'a, M> {
    pub fn new(model: &'a M, flow: &Flow, cost: &'a CostSpec, scheme: Scheme) -> Self {
        let g = model.reference();
        let g_rows = model
            .space()
            .states()
            .map(|i| model.targets(i).iter().map(|&j| g.rate(i, j)).collect())
            .collect();
        Self {
            model,
            grid: flow.grid(),
            mean_fields: flow.mean_fields(),
            cost,
            g_rows,
            scheme,
        }
    }

    pub fn n_states(&self) -> usize {
        self.g_rows.len()
    }

    pub fn targets_all(&self) -> Vec<Vec<usize>> {
        self.model
            .space()
            .states()
            .map(|i| self.model.targets(i).to_vec())
            .collect()
    }

    pub fn mean_field(&self, k: usize, w: f64) -> MeanField {
        let last = self.mean_fields.len() - 1;
        if k >= last {
            return self.mean_fields[last];
        }
        MeanField::lerp(&self.mean_fields[k], &self.mean_fields[k + 1], w)
    }

    pub fn time(&self, k: usize, w: f64) -> f64 {
        self.grid.time(k) + w * self.grid.dt()
    }

    /// Rates out of `i` into `row` and the running cost, at `(k, w)`.
    pub fn local(&self, k: usize, w: f64, i: usize, u: &[f64], v: &[f64], row: &mut Vec<f64>) -> f64 {
        let mf = self.mean_field(k, w);
        self.model.row(self.time(k, w), i, &mf, u, v, row);
        self.cost.f(i, &mf, u, v)
    }

    /// Hamiltonian at `(k, w, i)` for a control pair and a `Z` row.
    pub fn hamiltonian(&self, k: usize, w: f64, i: usize, u: &[f64], v: &[f64], z: &[f64], row: &mut Vec<f64>) -> f64 {
        let f = self.local(k, w, i, u, v, row);
        hamiltonian_value(f, row, &self.g_rows[i], z)
    }

    pub fn terminal_y(&self) -> Vec<f64> {
        let mf = self.mean_fields[self.mean_fields.len() - 1];
        (0..self.n_states()).map(|i| self.cost.h(i, &mf)).collect()
    }

    fn rhs(
        &self,
        form: Form,
        k: usize,
        w: f64,
        x: &[f64],
        c: &StepControls<'_>,
        out: &mut [f64],
        row: &mut Vec<f64>,
        z: &mut Vec<f64>,
    ) -> Result<()> {
        for i in 0..x.len() {
            let targets = self.model.targets(i);
            match form {
                Form::Entropic => {
                    z.clear();
                    z.extend(targets.iter().map(|&j| x[j] - x[i]));
                    let h = self.hamiltonian(k, w, i, c.u[i], c.v[i], z, row);
                    let entropic: f64 = self.g_rows[i]
                        .iter()
                        .zip(z.iter())
                        .map(|(g, zj)| g * zj.exp_m1())
                        .sum();
                    let d = h + entropic;
                    if !d.is_finite() {
                        return Err(Error::Overflow { node: k, state: i });
                    }
                    out[i] = d;
                }
                Form::Linear => {
                    let f = self.local(k, w, i, c.u[i], c.v[i], row);
                    let jumps: f64 = targets
                        .iter()
                        .zip(row.iter())
                        .map(|(&j, r)| r * (x[j] - x[i]))
                        .sum();
                    out[i] = f * x[i] + jumps;
                }
            }
        }
        Ok(())
    }

    /// Integrates from node `k + 1` back to node `k` with the controls of
    /// interval `k`.
    pub fn step(&self, form: Form, k: usize, next: &[f64], c: &StepControls<'_>) -> Result<Vec<f64>> {
        let n = next.len();
        let dt = self.grid.dt();
        let mut row = Vec::new();
        let mut z = Vec::new();
        let mut k1 = vec![0.0; n];
        self.rhs(form, k, 1.0, next, c, &mut k1, &mut row, &mut z)?;
        let out: Vec<f64> = match self.scheme {
            Scheme::Euler => (0..n).map(|s| next[s] + dt * k1[s]).collect(),
            Scheme::Rk4 => {
                let (mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
                let tmp: Vec<f64> = (0..n).map(|s| next[s] + 0.5 * dt * k1[s]).collect();
                self.rhs(form, k, 0.5, &tmp, c, &mut k2, &mut row, &mut z)?;
                let tmp: Vec<f64> = (0..n).map(|s| next[s] + 0.5 * dt * k2[s]).collect();
                self.rhs(form, k, 0.5, &tmp, c, &mut k3, &mut row, &mut z)?;
                let tmp: Vec<f64> = (0..n).map(|s| next[s] + dt * k3[s]).collect();
                self.rhs(form, k, 0.0, &tmp, c, &mut k4, &mut row, &mut z)?;
                (0..n)
                    .map(|s| next[s] + dt / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s]))
                    .collect()
            }
        };
        for (i, x) in out.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::Overflow { node: k, state: i });
            }
            if form == Form::Linear && *x <= 0.0 {
                return Err(Error::NonPositive {
                    node: k,
                    state: i,
                    value: *x,
                });
            }
        }
        Ok(out)
    }
}

fn solve_fixed_policy<M: Intensity + ?Sized>(
    model: &M,
    flow: &Flow,
    policy: &Policy,
    cost: &CostSpec,
    scheme: Scheme,
    form: Form,
) -> Result<BsdeSolution> {
    let sys = BackwardSystem::new(model, flow, cost, scheme);
    let grid = flow.grid();
    let n = sys.n_states();
    let terminal = sys.terminal_y();
    let mut field = vec![Vec::new(); grid.n_nodes()];
    field[grid.n_steps()] = match form {
        Form::Entropic => terminal,
        Form::Linear => terminal.iter().map(|h| h.exp()).collect(),
    };
    for k in (0..grid.n_steps()).rev() {
        let c = StepControls::from_policy(policy, k, n);
        field[k] = sys.step(form, k, &field[k + 1], &c)?;
    }
    let targets = sys.targets_all();
    Ok(match form {
        Form::Entropic => BsdeSolution::from_y(grid, field, targets),
        Form::Linear => {
            let y = field
                .iter()
                .map(|r| r.iter().map(|v| v.ln()).collect())
                .collect();
            BsdeSolution::assemble(grid, y, field, targets)
        }
    })
}

/// Linear Feynman–Kac system for `v = e^Y`, `Y = ln v`.
pub fn feynman_kac_backward<M: Intensity + ?Sized>(
    model: &M,
    flow: &Flow,
    policy: &Policy,
    cost: &CostSpec,
    scheme: Scheme,
) -> Result<BsdeSolution> {
    solve_fixed_policy(model, flow, policy, cost, scheme, Form::Linear)
}

/// Entropic backward system for `Y` with `Z` recovered as `Y` differences.
pub fn entropic_backward<M: Intensity + ?Sized>(
    model: &M,
    flow: &Flow,
    policy: &Policy,
    cost: &CostSpec,
    scheme: Scheme,
) -> Result<BsdeSolution> {
    solve_fixed_policy(model, flow, policy, cost, scheme, Form::Entropic)
}

/// `τ(z) = e^z − z − 1`, nonnegative and convex with `τ(0) = 0`.
pub fn tau(z: f64) -> f64 {
    z.exp_m1() - z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{schlogl_first, ConstantRateModel, QMatrix};
    use crate::space::{Dist, StateSpace};

    fn two_state_setup(n_steps: usize) -> (ConstantRateModel, Flow, Policy) {
        let m = ConstantRateModel::two_state(0.7, 1.2, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, n_steps).unwrap();
        let s = StateSpace::new(1).unwrap();
        let flow = Flow::constant(grid, &Dist::uniform(s));
        (m, flow, Policy::uncontrolled(grid, s))
    }

    #[test]
    fn zero_cost_gives_zero_field() {
        let (m, flow, p) = two_state_setup(20);
        let cost = CostSpec::zero();
        for sol in [
            feynman_kac_backward(&m, &flow, &p, &cost, Scheme::Rk4).unwrap(),
            entropic_backward(&m, &flow, &p, &cost, Scheme::Rk4).unwrap(),
        ] {
            assert_eq!(sol.sup_abs(), 0.0);
            assert_eq!(sol.v(0, 1), 1.0);
            assert_eq!(sol.z_row(3, 0), &[0.0]);
        }
    }

    #[test]
    fn constant_running_cost_is_state_free() {
        let (m, flow, p) = two_state_setup(40);
        let cost = CostSpec::new(RunningCost::constant(0.3), TerminalCost::default()).unwrap();
        let sol = feynman_kac_backward(&m, &flow, &p, &cost, Scheme::Rk4).unwrap();
        let grid = flow.grid();
        for k in 0..grid.n_nodes() {
            let expect = (0.3 * (1.0 - grid.time(k))).exp();
            for i in 0..2 {
                assert!((sol.v(k, i) - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn transform_equivalence_and_bound_on_schlogl() {
        let s = StateSpace::new(20).unwrap();
        let m = schlogl_first(QMatrix::band(s, 2, 0.1).unwrap(), 1.0, 0.05, 0.2, 0.02).unwrap();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let xi = Dist::point_mass(s, 2).unwrap();
        let p = Policy::uncontrolled(grid, s);
        let (flow, _) = crate::flow::picard_fixed_point(&m, &p, &xi, grid, &Default::default()).unwrap();
        let cost = CostSpec::new(
            RunningCost {
                state: 0.1,
                bound: 1.5,
                ..Default::default()
            },
            TerminalCost {
                threshold: 4,
                threshold_weight: 0.5,
                bound: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        let lin = feynman_kac_backward(&m, &flow, &p, &cost, Scheme::Rk4).unwrap();
        let ent = entropic_backward(&m, &flow, &p, &cost, Scheme::Rk4).unwrap();
        assert!(lin.sup_distance(&ent) < 1e-8);
        assert!(ent.bound_slack(&cost) >= -1e-9);
        assert_eq!(ent.z_consistency(), 0.0);
    }

    #[test]
    fn tau_is_nonnegative() {
        assert_eq!(tau(0.0), 0.0);
        for z in [-5.0, -0.1, 0.3, 2.0] {
            assert!(tau(z) > 0.0);
        }
    }

    #[test]
    fn csv_layout() {
        let (m, flow, p) = two_state_setup(4);
        let sol = entropic_backward(&m, &flow, &p, &CostSpec::zero(), Scheme::Rk4).unwrap();
        let csv = sol.to_csv();
        assert!(csv.starts_with("t,state,Y,v\n"));
        assert_eq!(csv.lines().count(), 1 + 5 * 2);
    }
}
