//! The risk-sensitive payoff E[exp(∫f + h)] from the backward equation,
//! from direct simulation, and from reference paths reweighted by Girsanov.

use mfjump::bsde::{entropic_backward, CostSpec, RunningCost, TerminalCost};
use mfjump::flow::{picard_fixed_point, PicardOptions, Policy, Scheme, TimeGrid};
use mfjump::model::{PolynomialCoefficients, PolynomialModel, QMatrix};
use mfjump::simulate::{likelihood_ratio_mean, payoff_mc_direct, payoff_mc_girsanov};
use mfjump::space::{Dist, StateSpace};

fn main() -> mfjump::Result<()> {
    let space = StateSpace::new(20)?;
    let coeffs = PolynomialCoefficients {
        birth_const: 1.0,
        birth_m1: 0.05,
        death_m1: 0.2,
        death_m2_fact: 0.02,
        ..Default::default()
    };
    let model = PolynomialModel::new(QMatrix::band(space, 2, 0.1)?, QMatrix::band(space, 2, 1.0)?, coeffs)?;
    let grid = TimeGrid::new(1.0, 200)?;
    let (x0, n, seed) = (2, 100_000, 11);
    let xi = Dist::point_mass(space, x0)?;
    let policy = Policy::uncontrolled(grid, space);
    let cost = CostSpec::new(
        RunningCost {
            state: 0.05,
            bound: 1.0,
            ..Default::default()
        },
        TerminalCost {
            threshold: 6,
            threshold_weight: 0.3,
            bound: 0.3,
            ..Default::default()
        },
    )?;

    let (flow, _) = picard_fixed_point(&model, &policy, &xi, grid, &PicardOptions::default())?;
    let y = entropic_backward(&model, &flow, &policy, &cost, Scheme::Rk4)?;
    let direct = payoff_mc_direct(&model, &flow, &policy, &cost, x0, n, seed)?;
    let girsanov = payoff_mc_girsanov(&model, &flow, &policy, &cost, x0, n, seed)?;
    let lr = likelihood_ratio_mean(&model, &flow, &policy, x0, n, seed, None)?;

    println!("exp Y(0, x0)      {:.5}", y.y(0, x0).exp());
    println!("direct MC         {:.5} +- {:.1e}", direct.mean, direct.std_error);
    println!("girsanov MC       {:.5} +- {:.1e}", girsanov.mean, girsanov.std_error);
    println!("E[L_T] under g    {:.5} +- {:.1e}", lr.mean, lr.std_error);
    Ok(())
}
