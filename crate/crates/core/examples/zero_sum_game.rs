//! Zero-sum game: u scales deaths, v scales births. The lower and upper
//! games are solved separately and checked against each other.

use mfjump::bsde::{CostSpec, RunningCost, TerminalCost};
use mfjump::flow::TimeGrid;
use mfjump::game::{solve_game, verify_saddle, GameOptions};
use mfjump::model::{ControlGrid, Knob, PolynomialCoefficients, PolynomialModel, QMatrix};
use mfjump::space::{Dist, StateSpace};

fn main() -> mfjump::Result<()> {
    let space = StateSpace::new(30)?;
    let coeffs = PolynomialCoefficients {
        birth_const: 1.0,
        birth_m1: 0.1,
        death_m1: 0.3,
        ..Default::default()
    };
    let model = PolynomialModel::new(QMatrix::band(space, 2, 0.1)?, QMatrix::band(space, 2, 1.0)?, coeffs)?
        .with_controls(vec![Knob::DeathScale], vec![Knob::BirthScale]);
    let grid_u = ControlGrid::scalar(&[0.5, 1.0])?;
    let grid_v = ControlGrid::scalar(&[0.5, 1.0])?;
    let cost = CostSpec::new(
        RunningCost {
            state: 0.2,
            u_linear: vec![0.1],
            v_linear: vec![-0.1],
            bound: 10.0,
            ..Default::default()
        },
        TerminalCost::default(),
    )?;
    let time = TimeGrid::new(1.0, 400)?;
    let xi = Dist::point_mass(space, 2)?;
    let opts = GameOptions::default();

    let r = solve_game(&model, &grid_u, &grid_v, &cost, &xi, time, &opts)?;
    println!("Isaacs gap {:e}, value {}", r.isaacs_gap, if r.has_value { "exists" } else { "missing" });
    println!("Y_low(0, 2) = {:.6}, Y_up(0, 2) = {:.6}", r.sol.y(0, 2), r.upper_sol.y(0, 2));
    println!("min (Y_up - Y_low) = {:e}", r.ordering_margin);

    let s = verify_saddle(&model, &r, &cost, &xi, 2, 10, 7, &opts)?;
    println!("saddle margins {:?} / {:?} over {} deviations", s.lower_margin, s.upper_margin, s.deviations.len());
    Ok(())
}
