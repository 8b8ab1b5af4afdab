//! Optimal feedback control of the birth rate, then a comparison sweep
//! against constant and random competitors.

use mfjump::bsde::{CostSpec, RunningCost, TerminalCost};
use mfjump::control::{solve_optimal, verify_optimality, SolverOptions};
use mfjump::flow::TimeGrid;
use mfjump::model::{ControlGrid, Knob, PolynomialCoefficients, PolynomialModel, QMatrix};
use mfjump::space::{Dist, StateSpace};

fn main() -> mfjump::Result<()> {
    let space = StateSpace::new(30)?;
    let coeffs = PolynomialCoefficients {
        birth_const: 1.0,
        birth_m1: 0.1,
        ..Default::default()
    };
    let model = PolynomialModel::new(QMatrix::band(space, 2, 0.1)?, QMatrix::band(space, 2, 1.0)?, coeffs)?
        .with_controls(vec![Knob::BirthConst], vec![]);
    let grid_u = ControlGrid::scalar(&[0.5, 1.0])?;
    model.check_grid(&grid_u, false)?;
    // cheaper to push births up, dearer to carry a large state
    let cost = CostSpec::new(
        RunningCost {
            constant: 0.1,
            state: 0.2,
            u_linear: vec![-0.1],
            bound: 10.0,
            ..Default::default()
        },
        TerminalCost::default(),
    )?;
    let time = TimeGrid::new(1.0, 400)?;
    let xi = Dist::point_mass(space, 2)?;
    let opts = SolverOptions::default();

    let r = solve_optimal(&model, &grid_u, &cost, &xi, time, &opts)?;
    println!("outer gaps {:?}", r.outer_gaps);
    println!("Y*(0, 2) = {:.6}", r.sol_star.y(0, 2));
    println!("hamiltonian gap {:e}, consistency gap {:e}", r.hamiltonian_gap, r.consistency_gap);
    let high: usize = r.u_star.table().iter().flatten().filter(|&&a| a == 1).count();
    println!("u* = 1.0 on {high} of {} nodes", time.n_nodes() * space.len());

    let rep = verify_optimality(&model, &r, &cost, &xi, 2, 20, 7, &opts)?;
    for e in rep.entries.iter().take(5) {
        println!("{:<12} min (Y^u - Y*) = {:.2e}", e.label, e.slack_min);
    }
    println!("smallest slack over {} competitors: {:.2e}", rep.entries.len(), rep.min_slack);
    Ok(())
}
