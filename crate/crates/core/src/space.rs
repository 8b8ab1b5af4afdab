//! Truncated state space `{0, …, N}`, probability distributions on it, and
//! exact one-dimensional optimal-transport distances.
//!
//! On the integer line the optimal coupling for any convex cost is the
//! quantile (monotone) coupling, so both `W₁` and `W₂` are closed-form:
//! `W₁` is the L¹ distance between CDFs and `W₂` is obtained by merging the
//! two CDF breakpoint lists and integrating the squared quantile gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer states `0..=n_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateSpace {
    n_max: usize,
}

impl StateSpace {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::invalid("state space needs n_max >= 1"));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Number of states, `N + 1`.
    pub fn len(&self) -> usize {
        self.n_max + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn states(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.n_max
    }
}

/// Raw `∫yᵏdμ` or falling-factorial `∫y(y−1)…(y−k+1)dμ` moment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    Raw,
    Factorial,
}

/// Probability distribution on a [`StateSpace`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Dist {
    probs: Vec<f64>,
}

impl Dist {
    /// Builds a distribution from nonnegative weights, renormalizing to sum 1.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::invalid("distribution needs at least two states"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::invalid(format!("invalid probability weight {w}")));
        }
        let total = pairwise_sum(&weights);
        if total <= 0.0 {
            return Err(Error::invalid("distribution weights sum to zero"));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn point_mass(space: StateSpace, state: usize) -> Result<Self> {
        if state > space.n_max() {
            return Err(Error::invalid(format!(
                "state {state} outside 0..={}",
                space.n_max()
            )));
        }
        let mut probs = vec![0.0; space.len()];
        probs[state] = 1.0;
        Ok(Self { probs })
    }

    /// Poisson law with the given mean, truncated to the space and renormalized.
    pub fn truncated_poisson(space: StateSpace, mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(Error::invalid(format!("poisson mean {mean} must be >= 0")));
        }
        let mut w = Vec::with_capacity(space.len());
        let mut term = (-mean).exp();
        for k in space.states() {
            w.push(term);
            term *= mean / (k + 1) as f64;
        }
        Self::new(w)
    }

    pub fn uniform(space: StateSpace) -> Self {
        let p = 1.0 / space.len() as f64;
        Self {
            probs: vec![p; space.len()],
        }
    }

    /// Clips entries to `[0, ∞)` and renormalizes. Used after an ODE step
    /// whose negative excursions have already been checked.
    pub(crate) fn from_step(mut probs: Vec<f64>) -> Self {
        for p in probs.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total = pairwise_sum(&probs);
        for p in probs.iter_mut() {
            *p /= total;
        }
        Self { probs }
    }

    pub fn space(&self) -> StateSpace {
        StateSpace {
            n_max: self.probs.len() - 1,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn moment(&self, k: u32, kind: MomentKind) -> f64 {
        moments(self, k, kind)
    }

    pub fn mean(&self) -> f64 {
        moments(self, 1, MomentKind::Raw)
    }

    /// Cumulative distribution `F(k) = μ({0..=k})`.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }

    /// Convex combination `(1−w)·self + w·other`.
    pub fn mix(&self, other: &Dist, w: f64) -> Dist {
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        Dist::from_step(probs)
    }
}

/// Deserialization keeps already-normalized entries bit-for-bit.
impl TryFrom<Vec<f64>> for Dist {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        let d = Dist::new(v.clone())?;
        if (pairwise_sum(&v) - 1.0).abs() <= 1e-9 {
            return Ok(Self { probs: v });
        }
        Ok(d)
    }
}

impl From<Dist> for Vec<f64> {
    fn from(d: Dist) -> Self {
        d.probs
    }
}

/// Exact moment of order `k` (raw or falling factorial). Orders above 3 are
/// accepted but only 1..=3 are used by the model presets.
pub fn moments(mu: &Dist, k: u32, kind: MomentKind) -> f64 {
    let terms: Vec<f64> = mu
        .probs
        .iter()
        .enumerate()
        .map(|(y, p)| {
            let y = y as f64;
            let w = match kind {
                MomentKind::Raw => y.powi(k as i32),
                MomentKind::Factorial => (0..k).map(|r| y - r as f64).product(),
            };
            w * p
        })
        .collect();
    pairwise_sum(&terms)
}

fn check_same(mu: &Dist, nu: &Dist) -> Result<()> {
    if mu.len() != nu.len() {
        return Err(Error::MismatchedSpace {
            left: mu.len(),
            right: nu.len(),
        });
    }
    Ok(())
}

/// `W₁(μ,ν) = Σ_{k<N} |F_μ(k) − F_ν(k)|`.
pub fn wasserstein1(mu: &Dist, nu: &Dist) -> Result<f64> {
    check_same(mu, nu)?;
    let (fm, fn_) = (mu.cdf(), nu.cdf());
    let n = mu.len() - 1;
    let gaps: Vec<f64> = (0..n).map(|k| (fm[k] - fn_[k]).abs()).collect();
    Ok(pairwise_sum(&gaps))
}

/// `W₂(μ,ν)` through the quantile coupling. The quantile levels above ½
/// are handled on the reflected distributions, whose cumulative sums keep
/// the relative precision of small tail masses.
pub fn wasserstein2(mu: &Dist, nu: &Dist) -> Result<f64> {
    check_same(mu, nu)?;
    let lower = half_quantile_cost(&mu.cdf(), &nu.cdf());
    let upper = half_quantile_cost(&reflected_cdf(mu), &reflected_cdf(nu));
    Ok((lower + upper).max(0.0).sqrt())
}

fn reflected_cdf(mu: &Dist) -> Vec<f64> {
    let mut acc = 0.0;
    mu.probs
        .iter()
        .rev()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

/// `∫₀^½ (Q_a(u) − Q_b(u))² du` for CDFs `ca`, `cb` on `0..=N`.
fn half_quantile_cost(ca: &[f64], cb: &[f64]) -> f64 {
    let last = ca.len() - 1;
    let (mut i, mut j) = (0usize, 0usize);
    let mut q = 0.0;
    let mut cost = 0.0;
    while q < 0.5 {
        let (a, b) = (
            if i == last { 1.0 } else { ca[i] },
            if j == last { 1.0 } else { cb[j] },
        );
        let next = a.min(b).min(0.5);
        let d = i as f64 - j as f64;
        cost += (next - q) * d * d;
        q = next;
        if a <= next && i < last {
            i += 1;
        }
        if b <= next && j < last {
            j += 1;
        }
    }
    cost
}

/// Pairwise (cascade) summation; order-independent of thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(n: usize) -> StateSpace {
        StateSpace::new(n).unwrap()
    }

    #[test]
    fn point_mass_moments() {
        let d = Dist::point_mass(space(5), 2).unwrap();
        assert_eq!(moments(&d, 1, MomentKind::Raw), 2.0);
        assert_eq!(moments(&d, 2, MomentKind::Factorial), 2.0);
        assert_eq!(moments(&d, 3, MomentKind::Factorial), 0.0);
        let half = Dist::new(vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(half.mean(), 1.0);
    }

    #[test]
    fn renormalizes_on_construction() {
        let d = Dist::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(Dist::new(vec![1.0, -0.1]).is_err());
        assert!(Dist::new(vec![0.0, 0.0]).is_err());
        assert!(StateSpace::new(0).is_err());
    }

    #[test]
    fn point_mass_distances() {
        let s = space(4);
        let a = Dist::point_mass(s, 0).unwrap();
        let b = Dist::point_mass(s, 3).unwrap();
        assert_eq!(wasserstein1(&a, &b).unwrap(), 3.0);
        assert_eq!(wasserstein2(&a, &b).unwrap(), 3.0);
        assert_eq!(wasserstein2(&b, &b).unwrap(), 0.0);
        let mu = Dist::new(vec![0.5, 0.0, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(wasserstein1(&mu, &mu).unwrap(), 0.0);
        assert_eq!(wasserstein2(&mu, &mu).unwrap(), 0.0);
    }

    #[test]
    fn split_mass_against_midpoint() {
        let mu = Dist::new(vec![0.5, 0.0, 0.5]).unwrap();
        let d1 = Dist::point_mass(space(2), 1).unwrap();
        assert!((wasserstein1(&mu, &d1).unwrap() - 1.0).abs() < 1e-15);
        assert!((wasserstein2(&mu, &d1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_spaces_rejected() {
        let a = Dist::uniform(space(2));
        let b = Dist::uniform(space(3));
        assert!(matches!(
            wasserstein1(&a, &b),
            Err(Error::MismatchedSpace { .. })
        ));
        assert!(wasserstein2(&a, &b).is_err());
    }

    #[test]
    fn truncated_poisson_is_normalized() {
        let d = Dist::truncated_poisson(space(30), 2.0).unwrap();
        assert!((d.mean() - 2.0).abs() < 1e-9);
    }
}
