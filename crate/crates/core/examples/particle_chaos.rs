//! Finite particle systems against the mean-field flow: W₁ at the horizon
//! shrinks with the number of particles.

use mfjump::flow::{picard_fixed_point, PicardOptions, Policy, TimeGrid};
use mfjump::model::{schlogl_first, QMatrix};
use mfjump::simulate::{particle_system, propagation_of_chaos};
use mfjump::space::{Dist, StateSpace};

fn main() -> mfjump::Result<()> {
    let space = StateSpace::new(60)?;
    let model = schlogl_first(QMatrix::band(space, 2, 0.1)?, 1.0, 0.05, 0.2, 0.02)?;
    let grid = TimeGrid::new(1.0, 400)?;
    let xi = Dist::point_mass(space, 2)?;
    let policy = Policy::uncontrolled(grid, space);
    let (flow, _) = picard_fixed_point(&model, &policy, &xi, grid, &PicardOptions::default())?;

    let (empirical, one) = particle_system(&model, &policy, &xi, 1000, 3, &flow)?;
    println!(
        "1000 particles: {} events, terminal mean {:.3} vs {:.3}, W1 {:.4}",
        one.n_events,
        empirical.terminal().mean(),
        flow.terminal().mean(),
        one.w1_terminal
    );

    let sizes = [100, 1000, 10000];
    let rep = propagation_of_chaos(&model, &policy, &xi, &flow, &sizes, 8, 3)?;
    for (n, w) in sizes.iter().zip(&rep.mean_w1) {
        println!("n = {n:>5}: mean W1 = {w:.4}");
    }
    println!("fitted decay exponent {:.3}", rep.exponent);
    Ok(())
}
