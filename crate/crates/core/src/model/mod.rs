//! Intensity models for controlled mean-field jump chains.
//!
//! An intensity model supplies `λ_ij(t, i, μ, u, v)` on a truncated state
//! space together with the reference Q-matrix `g` that fixes which pairs
//! `(i, j)` are active. The law `μ` enters only through [`MeanField`], a
//! vector of statistics that are linear in `μ`; linear interpolation of the
//! statistics between time nodes is therefore the same as evaluating the
//! model on the linearly interpolated law.

mod presets;
mod validate;

pub use presets::{ConstantRateModel, Knob, PolynomialCoefficients, PolynomialModel};
pub use presets::{autocatalytic, schlogl_first, schlogl_second};
pub use validate::{validate_assumptions, AssumptionReport, SampleSet, Violation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{moments, Dist, MomentKind, StateSpace};

/// Statistics of `μ` read by intensities and costs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    /// `∫ y dμ`
    pub m1: f64,
    /// `∫ y² dμ`
    pub m2: f64,
    /// `∫ y(y−1) dμ`
    pub m2_fact: f64,
    /// `∫ y(y−1)(y−2) dμ`
    pub m3_fact: f64,
}

impl MeanField {
    pub const DIM: usize = 4;

    pub fn of(mu: &Dist) -> Self {
        Self {
            m1: moments(mu, 1, MomentKind::Raw),
            m2: moments(mu, 2, MomentKind::Raw),
            m2_fact: moments(mu, 2, MomentKind::Factorial),
            m3_fact: moments(mu, 3, MomentKind::Factorial),
        }
    }

    /// `(1−w)·a + w·b`
    pub fn lerp(a: &MeanField, b: &MeanField, w: f64) -> Self {
        let l = |x: f64, y: f64| x + w * (y - x);
        Self {
            m1: l(a.m1, b.m1),
            m2: l(a.m2, b.m2),
            m2_fact: l(a.m2_fact, b.m2_fact),
            m3_fact: l(a.m3_fact, b.m3_fact),
        }
    }

    pub fn to_array(self) -> [f64; Self::DIM] {
        [self.m1, self.m2, self.m2_fact, self.m3_fact]
    }

    pub fn from_array(a: [f64; Self::DIM]) -> Self {
        Self {
            m1: a[0],
            m2: a[1],
            m2_fact: a[2],
            m3_fact: a[3],
        }
    }

    pub const NAMES: [&'static str; Self::DIM] = ["m1", "m2", "m2_fact", "m3_fact"];
}

/// Reference Q-matrix `g` on a truncated space.
///
/// Off-diagonal entries are nonnegative; a pair is active iff its rate is
/// positive. The diagonal is implied, `g_ii = −Σ_{j≠i} g_ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct QMatrix {
    space: StateSpace,
    rates: Vec<Vec<f64>>,
    targets: Vec<Vec<usize>>,
}

impl QMatrix {
    /// Dense off-diagonal rates; diagonal entries of the input are ignored.
    pub fn new(rates: Vec<Vec<f64>>) -> Result<Self> {
        let n = rates.len();
        let space = StateSpace::new(n.saturating_sub(1))?;
        let mut clean = vec![vec![0.0; n]; n];
        for (i, row) in rates.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "Q-matrix row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &r) in row.iter().enumerate() {
                if i == j {
                    continue;
                }
                if !(r.is_finite() && r >= 0.0) {
                    return Err(Error::invalid(format!("g[{i}][{j}] = {r} must be >= 0")));
                }
                clean[i][j] = r;
            }
        }
        Ok(Self::from_clean(space, clean))
    }

    fn from_clean(space: StateSpace, rates: Vec<Vec<f64>>) -> Self {
        let targets = rates
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|&(j, &r)| j != i && r > 0.0)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        Self {
            space,
            rates,
            targets,
        }
    }

    /// Band matrix: `g_ij = rate` when `0 < |j−i| < band`, else 0.
    pub fn band(space: StateSpace, band: usize, rate: f64) -> Result<Self> {
        if band < 2 {
            return Err(Error::invalid("band width N0 must be >= 2"));
        }
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!("band rate {rate} must be > 0")));
        }
        let n = space.len();
        let mut rates = vec![vec![0.0; n]; n];
        for (i, row) in rates.iter_mut().enumerate() {
            for (j, r) in row.iter_mut().enumerate() {
                if i != j && i.abs_diff(j) < band {
                    *r = rate;
                }
            }
        }
        Ok(Self::from_clean(space, rates))
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if i == j {
            -self.exit_rate(i)
        } else {
            self.rates[i][j]
        }
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.targets[i].iter().map(|&j| self.rates[i][j]).sum()
    }

    /// Active destinations out of `i`, increasing.
    pub fn targets(&self, i: usize) -> &[usize] {
        &self.targets[i]
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        i != j && self.rates[i][j] > 0.0
    }

    /// Smallest active rate, the constant `c₁` of the lower bound `g_ij ≥ c₁`.
    pub fn min_active_rate(&self) -> f64 {
        self.space
            .states()
            .flat_map(|i| self.targets[i].iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.rates[i][j])
            .fold(f64::INFINITY, f64::min)
    }

    /// `Σ_{i≠j} |j−i|² g_ij`
    pub fn second_moment_sum(&self) -> f64 {
        self.space
            .states()
            .flat_map(|i| self.targets[i].iter().map(move |&j| (i, j)))
            .map(|(i, j)| (i.abs_diff(j) as f64).powi(2) * self.rates[i][j])
            .sum()
    }

    /// Copy with every active rate multiplied by `factor(i, j)`.
    pub fn scaled(&self, factor: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut rates = self.rates.clone();
        for i in self.space.states() {
            for &j in &self.targets[i] {
                rates[i][j] *= factor(i, j);
            }
        }
        Self::new(rates)
    }
}

/// Finite set of control points for one player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    points: Vec<Vec<f64>>,
}

impl ControlGrid {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("control grid must be nonempty"));
        }
        let dim = points[0].len();
        for (k, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::invalid(format!(
                    "control point {k} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("control point {k} is not finite")));
            }
            if points[..k].contains(p) {
                return Err(Error::invalid(format!("duplicate control point {p:?}")));
            }
        }
        Ok(Self { points })
    }

    /// One-dimensional grid from scalar values.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| vec![x]).collect())
    }

    /// The trivial grid of a player without influence: one empty point.
    pub fn inert() -> Self {
        Self {
            points: vec![Vec::new()],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Euclidean distance between two grid points, the metric on controls.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.points[a]
            .iter()
            .zip(&self.points[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// Jump intensities `λ_ij(t, i, μ, u, v)` aligned with a reference Q-matrix.
///
/// Implementations must return 0 on pairs that are inactive in
/// [`Intensity::reference`] and should return positive rates on active
/// pairs (checked by [`validate_assumptions`]).
pub trait Intensity: Send + Sync {
    fn space(&self) -> StateSpace;

    fn reference(&self) -> &QMatrix;

    fn rate(&self, t: f64, i: usize, j: usize, mf: &MeanField, u: &[f64], v: &[f64]) -> f64;

    /// Whether rates ignore the law entirely.
    fn is_mean_field_free(&self) -> bool {
        false
    }

    /// Active destinations out of `i`.
    fn targets(&self, i: usize) -> &[usize] {
        self.reference().targets(i)
    }

    /// Rates to every active destination of `i`, in [`Intensity::targets`] order.
    fn row(&self, t: f64, i: usize, mf: &MeanField, u: &[f64], v: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.targets(i).iter().map(|&j| self.rate(t, i, j, mf, u, v)));
    }
}

impl<T: Intensity + ?Sized> Intensity for std::sync::Arc<T> {
    fn space(&self) -> StateSpace {
        (**self).space()
    }
    fn reference(&self) -> &QMatrix {
        (**self).reference()
    }
    fn rate(&self, t: f64, i: usize, j: usize, mf: &MeanField, u: &[f64], v: &[f64]) -> f64 {
        (**self).rate(t, i, j, mf, u, v)
    }
    fn is_mean_field_free(&self) -> bool {
        (**self).is_mean_field_free()
    }
    fn targets(&self, i: usize) -> &[usize] {
        (**self).targets(i)
    }
}

/// The reference chain itself viewed as an intensity model (`λ ≡ g`).
#[derive(Clone, Debug)]
pub struct ReferenceChain {
    g: QMatrix,
}

impl ReferenceChain {
    pub fn new(g: QMatrix) -> Self {
        Self { g }
    }
}

impl Intensity for ReferenceChain {
    fn space(&self) -> StateSpace {
        self.g.space()
    }
    fn reference(&self) -> &QMatrix {
        &self.g
    }
    fn rate(&self, _t: f64, i: usize, j: usize, _mf: &MeanField, _u: &[f64], _v: &[f64]) -> f64 {
        self.g.rate(i, j)
    }
    fn is_mean_field_free(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_matrix_structure() {
        let s = StateSpace::new(5).unwrap();
        let g = QMatrix::band(s, 3, 0.5).unwrap();
        assert_eq!(g.targets(0), &[1, 2]);
        assert_eq!(g.targets(3), &[1, 2, 4, 5]);
        assert_eq!(g.targets(5), &[3, 4]);
        assert_eq!(g.rate(3, 3), -2.0);
        assert_eq!(g.min_active_rate(), 0.5);
        assert!(QMatrix::band(s, 1, 0.5).is_err());
    }

    #[test]
    fn qmatrix_rejects_negative_rates() {
        assert!(QMatrix::new(vec![vec![0.0, -1.0], vec![1.0, 0.0]]).is_err());
        let g = QMatrix::new(vec![vec![7.0, 1.0], vec![2.0, 7.0]]).unwrap();
        assert_eq!(g.rate(0, 0), -1.0);
        assert_eq!(g.second_moment_sum(), 3.0);
    }

    #[test]
    fn control_grid_invariants() {
        assert!(ControlGrid::new(vec![]).is_err());
        assert!(ControlGrid::scalar(&[1.0, 1.0]).is_err());
        assert!(ControlGrid::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        let g = ControlGrid::scalar(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.distance(0, 2), 2.0);
        assert_eq!(ControlGrid::inert().dim(), 0);
    }

    #[test]
    fn mean_field_statistics_are_linear() {
        let s = StateSpace::new(4).unwrap();
        let a = Dist::point_mass(s, 3).unwrap();
        let b = Dist::point_mass(s, 1).unwrap();
        let mid = a.mix(&b, 0.25);
        let lerp = MeanField::lerp(&MeanField::of(&a), &MeanField::of(&b), 0.25);
        let direct = MeanField::of(&mid);
        for (x, y) in lerp.to_array().iter().zip(direct.to_array()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
