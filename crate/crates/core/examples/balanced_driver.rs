//! Balanced decomposition of a max-min driver: F(z) − F(z̄) = ⟨ℓ̂, z − z̄⟩_g.

use mfjump::bsde::{balanced_decomposition, DriverMode, FamilyMember};

fn main() -> mfjump::Result<()> {
    let g = [1.0, 0.5];
    // members a = iu·2 + iv for a 2 × 2 product of controls
    let family: Vec<FamilyMember> = [(0.1, [0.5, -0.2]), (0.3, [1.0, 0.4]), (-0.2, [-0.5, 0.8]), (0.0, [0.2, -0.6])]
        .into_iter()
        .map(|(running, ell)| FamilyMember {
            running,
            ell: ell.to_vec(),
        })
        .collect();
    let (y, z, zbar) = (0.4, [1.2, -0.7], [-0.3, 0.5]);

    for mode in [
        DriverMode::Min,
        DriverMode::Max,
        DriverMode::MaxMin { n_u: 2, n_v: 2 },
        DriverMode::MinMax { n_u: 2, n_v: 2 },
    ] {
        let d = balanced_decomposition(&family, &g, y, &z, &zbar, mode)?;
        println!(
            "{mode:?}: l_hat = [{:.4}, {:.4}], alpha = {:.4}, residual {:.1e}",
            d.ell_hat[0], d.ell_hat[1], d.alpha, d.residual
        );
    }
    Ok(())
}
