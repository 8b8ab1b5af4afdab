//! Balanced decomposition of optimized linear drivers.
//!
//! For a finite family `{(fᵃ, ℓᵃ)}` and `F(z) = opt_a { y·fᵃ + ⟨ℓᵃ, z⟩_g }`
//! (min, max, or a nested max-min / min-max over a product index), the
//! increment `F(z) − F(z̄)` is sandwiched between `⟨ℓ̲, z − z̄⟩_g` and
//! `⟨ℓ̄, z − z̄⟩_g`, where `ℓ̲, ℓ̄` take the coordinatewise min or max over
//! the family according to the sign of `z − z̄`. The convex combination
//! `ℓ̂ = αℓ̄ + (1−α)ℓ̲` with
//! `α = (F(z) − F(z̄) − ⟨ℓ̲, z−z̄⟩_g) / ⟨ℓ̄ − ℓ̲, z−z̄⟩_g`
//! then satisfies `F(z) − F(z̄) = ⟨ℓ̂, z − z̄⟩_g` exactly, and inherits
//! `1 + ℓ̂ > 0` from the family.

use serde::Serialize;

use crate::error::{Error, Result};

/// One member `(fᵃ, ℓᵃ)` of the family; `ell` is indexed like `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyMember {
    pub running: f64,
    pub ell: Vec<f64>,
}

/// How the family is optimized. For the nested modes member
/// `a = iu·n_v + iv` corresponds to the control pair `(u_iu, v_iv)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriverMode {
    Min,
    Max,
    /// `max_v min_u`
    MaxMin { n_u: usize, n_v: usize },
    /// `min_u max_v`
    MinMax { n_u: usize, n_v: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BalancedDecomposition {
    pub ell_hat: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: f64,
    pub residual: f64,
}

const ALPHA_TOLERANCE: f64 = 1e-12;

fn inner(ell: &[f64], z: &[f64], g: &[f64]) -> f64 {
    ell.iter().zip(z).zip(g).map(|((l, z), g)| l * z * g).sum()
}

/// `F(z)` by enumeration over the family.
pub fn optimized_driver(family: &[FamilyMember], g: &[f64], y: f64, z: &[f64], mode: DriverMode) -> f64 {
    let value = |a: usize| y * family[a].running + inner(&family[a].ell, z, g);
    match mode {
        DriverMode::Min => (0..family.len()).map(value).fold(f64::INFINITY, f64::min),
        DriverMode::Max => (0..family.len()).map(value).fold(f64::NEG_INFINITY, f64::max),
        DriverMode::MaxMin { n_u, n_v } => (0..n_v)
            .map(|iv| {
                (0..n_u)
                    .map(|iu| value(iu * n_v + iv))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::NEG_INFINITY, f64::max),
        DriverMode::MinMax { n_u, n_v } => (0..n_u)
            .map(|iu| {
                (0..n_v)
                    .map(|iv| value(iu * n_v + iv))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::INFINITY, f64::min),
    }
}

pub fn balanced_decomposition(
    family: &[FamilyMember],
    g: &[f64],
    y: f64,
    z: &[f64],
    zbar: &[f64],
    mode: DriverMode,
) -> Result<BalancedDecomposition> {
    if family.is_empty() {
        return Err(Error::invalid("balanced decomposition needs a nonempty family"));
    }
    let width = g.len();
    if z.len() != width || zbar.len() != width || family.iter().any(|m| m.ell.len() != width) {
        return Err(Error::invalid("family rows, g, z and zbar must have equal length"));
    }
    if let DriverMode::MaxMin { n_u, n_v } | DriverMode::MinMax { n_u, n_v } = mode {
        if n_u * n_v != family.len() {
            return Err(Error::invalid("product family size does not match n_u·n_v"));
        }
    }
    if z == zbar {
        let ell = family[0].ell.clone();
        return Ok(BalancedDecomposition {
            lower: ell.clone(),
            upper: ell.clone(),
            ell_hat: ell,
            alpha: 0.0,
            residual: 0.0,
        });
    }

    let col_min: Vec<f64> = (0..width)
        .map(|j| family.iter().map(|m| m.ell[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let col_max: Vec<f64> = (0..width)
        .map(|j| family.iter().map(|m| m.ell[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let lower: Vec<f64> = (0..width)
        .map(|j| if z[j] > zbar[j] { col_min[j] } else { col_max[j] })
        .collect();
    let upper: Vec<f64> = (0..width)
        .map(|j| if zbar[j] > z[j] { col_min[j] } else { col_max[j] })
        .collect();
    let dz: Vec<f64> = z.iter().zip(zbar).map(|(a, b)| a - b).collect();

    let delta_f = optimized_driver(family, g, y, z, mode) - optimized_driver(family, g, y, zbar, mode);
    let low = inner(&lower, &dz, g);
    let numerator = delta_f - low;
    let spread: Vec<f64> = upper.iter().zip(&lower).map(|(a, b)| a - b).collect();
    let denominator = inner(&spread, &dz, g);
    let scale = 1.0
        + delta_f.abs()
        + (0..width)
            .map(|j| (col_min[j].abs() + col_max[j].abs()) * dz[j].abs() * g[j])
            .sum::<f64>();

    let alpha = if denominator <= ALPHA_TOLERANCE * scale {
        if numerator.abs() > ALPHA_TOLERANCE * scale {
            return Err(Error::Unbalanced { numerator });
        }
        0.0
    } else {
        (numerator / denominator).clamp(0.0, 1.0)
    };
    let ell_hat: Vec<f64> = upper
        .iter()
        .zip(&lower)
        .map(|(u, l)| alpha * u + (1.0 - alpha) * l)
        .collect();
    let residual = (delta_f - inner(&ell_hat, &dz, g)).abs();
    Ok(BalancedDecomposition {
        ell_hat,
        lower,
        upper,
        alpha,
        residual,
    })
}
