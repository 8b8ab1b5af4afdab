use serde::Serialize;

use super::BsdeSolution;
use crate::error::{Error, Result};

/// Outcome of checking `Y₁ ≥ Y₂` node-wise.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// `min (Y₁ − Y₂)` over all nodes and states.
    pub min_margin: f64,
    /// `(node, state)` attaining the minimum.
    pub worst: (usize, usize),
    pub ordered: bool,
}

/// Slack allowed for round-off.
pub const COMPARISON_TOLERANCE: f64 = 1e-10;

/// Checks `upper.Y(t,i) ≥ lower.Y(t,i) − tol` everywhere. The caller is
/// responsible for certifying the ordering of terminal data and drivers.
pub fn comparison_check(upper: &BsdeSolution, lower: &BsdeSolution, tol: f64) -> Result<ComparisonReport> {
    let (a, b) = (upper.y_field(), lower.y_field());
    if a.len() != b.len() || a[0].len() != b[0].len() {
        return Err(Error::invalid("solutions live on different grids"));
    }
    let mut report = ComparisonReport {
        min_margin: f64::INFINITY,
        worst: (0, 0),
        ordered: true,
    };
    for (k, (ra, rb)) in a.iter().zip(b).enumerate() {
        for (i, (ya, yb)) in ra.iter().zip(rb).enumerate() {
            let m = ya - yb;
            if m < report.min_margin {
                report.min_margin = m;
                report.worst = (k, i);
            }
        }
    }
    report.ordered = report.min_margin >= -tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::{entropic_backward, CostSpec, RunningCost, TerminalCost};
    use crate::flow::{Flow, Policy, Scheme, TimeGrid};
    use crate::model::ConstantRateModel;
    use crate::space::{Dist, StateSpace};

    fn solve(h_const: f64) -> BsdeSolution {
        let m = ConstantRateModel::two_state(0.5, 0.8, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let s = StateSpace::new(1).unwrap();
        let flow = Flow::constant(grid, &Dist::uniform(s));
        let cost = CostSpec::new(
            RunningCost {
                state: 0.4,
                bound: 1.0,
                ..Default::default()
            },
            TerminalCost {
                constant: h_const,
                state: 0.2,
                bound: 2.0,
                ..Default::default()
            },
        )
        .unwrap();
        entropic_backward(&m, &flow, &Policy::uncontrolled(grid, s), &cost, Scheme::Rk4).unwrap()
    }

    #[test]
    fn identical_inputs_have_zero_margin() {
        let a = solve(0.0);
        let r = comparison_check(&a, &a, COMPARISON_TOLERANCE).unwrap();
        assert_eq!(r.min_margin, 0.0);
        assert!(r.ordered);
    }

    #[test]
    fn shifted_terminal_orders_solutions() {
        let hi = solve(0.5);
        let lo = solve(-0.5);
        let r = comparison_check(&hi, &lo, COMPARISON_TOLERANCE).unwrap();
        assert!(r.ordered && r.min_margin > 0.0);
        let flipped = comparison_check(&lo, &hi, COMPARISON_TOLERANCE).unwrap();
        assert!(!flipped.ordered);
    }
}
