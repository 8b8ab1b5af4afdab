//! W₁ and W₂ between laws on {0, …, N}.

use mfjump::space::{wasserstein1, wasserstein2, Dist, StateSpace};

fn main() -> mfjump::Result<()> {
    let space = StateSpace::new(10)?;
    let at = |i| Dist::point_mass(space, i);
    let split = Dist::new(vec![0.5, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])?;
    let poisson = Dist::truncated_poisson(space, 3.0)?;
    let uniform = Dist::uniform(space);

    let pairs = [
        ("delta_1 vs delta_4", at(1)?, at(4)?),
        ("(delta_0 + delta_4)/2 vs delta_2", split.clone(), at(2)?),
        ("poisson(3) vs uniform", poisson.clone(), uniform),
        ("poisson(3) vs (delta_0 + delta_4)/2", poisson, split),
    ];
    println!("{:<40} {:>10} {:>10}", "pair", "W1", "W2");
    for (name, a, b) in &pairs {
        println!("{name:<40} {:>10.6} {:>10.6}", wasserstein1(a, b)?, wasserstein2(a, b)?);
    }
    Ok(())
}
