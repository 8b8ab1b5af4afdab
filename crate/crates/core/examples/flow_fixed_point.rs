//! Fixed-point flow of Schlögl's first model by Picard iteration.

use mfjump::flow::{flow_diagnostics, linear_forward, picard_fixed_point, PicardOptions, Policy, TimeGrid};
use mfjump::model::{schlogl_first, QMatrix};
use mfjump::space::{Dist, StateSpace};

fn main() -> mfjump::Result<()> {
    let space = StateSpace::new(60)?;
    let model = schlogl_first(QMatrix::band(space, 2, 0.1)?, 1.0, 0.05, 0.2, 0.02)?;
    let grid = TimeGrid::new(1.0, 400)?;
    let xi = Dist::point_mass(space, 2)?;
    let policy = Policy::uncontrolled(grid, space);
    let opts = PicardOptions::default();

    let (flow, diag) = picard_fixed_point(&model, &policy, &xi, grid, &opts)?;
    for (k, d) in diag.distances.iter().enumerate() {
        println!("iteration {:>2}: sup W2 = {d:.3e}", k + 1);
    }
    if let Some(r) = diag.contraction_ratio(2) {
        println!("contraction ratio {r:.3}");
    }
    let again = linear_forward(&model, &flow, &policy, &xi, opts.scheme)?;
    println!("one more step moves the flow by {:.1e}", again.sup_w2(&flow)?);

    let report = flow_diagnostics(&flow);
    println!("boundary mass {:.1e}", report.sup_boundary_mass);
    for k in (0..=400).step_by(100) {
        println!("t = {:.2}  mean = {:.4}", grid.time(k), flow.at(k).mean());
    }
    Ok(())
}
