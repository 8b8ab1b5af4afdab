//! Bounded running and terminal costs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MeanField;

/// Running cost
/// `f = c₀ + c_x·i + c_m·m₁(μ) + Σ_d (a_d u_d + b_d u_d²) + Σ_d (a'_d v_d + b'_d v_d²) + κ·Σ_d u_d v_d`,
/// clipped to `[−bound, bound]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunningCost {
    pub constant: f64,
    pub state: f64,
    pub mean: f64,
    pub u_linear: Vec<f64>,
    pub u_quadratic: Vec<f64>,
    pub v_linear: Vec<f64>,
    pub v_quadratic: Vec<f64>,
    pub interaction: f64,
    pub bound: f64,
}

impl RunningCost {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            bound: c.abs(),
            ..Default::default()
        }
    }

    /// Value before clipping.
    pub fn raw(&self, i: usize, mf: &MeanField, u: &[f64], v: &[f64]) -> f64 {
        let mut x = self.constant + self.state * i as f64 + self.mean * mf.m1;
        for (d, &ud) in u.iter().enumerate() {
            x += coef(&self.u_linear, d) * ud + coef(&self.u_quadratic, d) * ud * ud;
        }
        for (d, &vd) in v.iter().enumerate() {
            x += coef(&self.v_linear, d) * vd + coef(&self.v_quadratic, d) * vd * vd;
        }
        if self.interaction != 0.0 {
            x += self.interaction * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
        x
    }

    pub fn eval(&self, i: usize, mf: &MeanField, u: &[f64], v: &[f64]) -> f64 {
        self.raw(i, mf, u, v).clamp(-self.bound, self.bound)
    }
}

/// Terminal cost `h = c₀ + c_x·i + c_m·m₁(μ) + w·1{i ≥ k}`, clipped to `[−bound, bound]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminalCost {
    pub constant: f64,
    pub state: f64,
    pub mean: f64,
    pub threshold: usize,
    pub threshold_weight: f64,
    pub bound: f64,
}

impl TerminalCost {
    pub fn raw(&self, i: usize, mf: &MeanField) -> f64 {
        let step = if i >= self.threshold {
            self.threshold_weight
        } else {
            0.0
        };
        self.constant + self.state * i as f64 + self.mean * mf.m1 + step
    }

    pub fn eval(&self, i: usize, mf: &MeanField) -> f64 {
        self.raw(i, mf).clamp(-self.bound, self.bound)
    }
}

fn coef(v: &[f64], d: usize) -> f64 {
    v.get(d).copied().unwrap_or(0.0)
}

/// Running cost `f` and terminal cost `h` with declared sup-norm bounds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSpec {
    pub running: RunningCost,
    pub terminal: TerminalCost,
}

impl CostSpec {
    pub fn new(running: RunningCost, terminal: TerminalCost) -> Result<Self> {
        let spec = Self { running, terminal };
        spec.validate()?;
        Ok(spec)
    }

    /// `f ≡ 0`, `h ≡ 0`.
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in [
            ("running.bound", self.running.bound),
            ("terminal.bound", self.terminal.bound),
        ] {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::invalid(format!("{name} = {b} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    pub fn f(&self, i: usize, mf: &MeanField, u: &[f64], v: &[f64]) -> f64 {
        self.running.eval(i, mf, u, v)
    }

    pub fn h(&self, i: usize, mf: &MeanField) -> f64 {
        self.terminal.eval(i, mf)
    }

    pub fn f_bound(&self) -> f64 {
        self.running.bound
    }

    pub fn h_bound(&self) -> f64 {
        self.terminal.bound
    }

    /// Largest unclipped `|f|` and `|h|` over the supplied inputs; values
    /// above the declared bounds mean clipping is active there.
    pub fn measured_bounds<'a>(
        &self,
        states: impl Iterator<Item = usize> + Clone,
        mean_fields: &[MeanField],
        controls: impl Iterator<Item = (&'a [f64], &'a [f64])> + Clone,
    ) -> (f64, f64) {
        let mut fmax = 0.0f64;
        let mut hmax = 0.0f64;
        for mf in mean_fields {
            for i in states.clone() {
                hmax = hmax.max(self.terminal.raw(i, mf).abs());
                for (u, v) in controls.clone() {
                    fmax = fmax.max(self.running.raw(i, mf, u, v).abs());
                }
            }
        }
        (fmax, hmax)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_cost_terms_and_clipping() {
        let f = RunningCost {
            constant: 0.5,
            state: 1.0,
            mean: 0.25,
            u_quadratic: vec![2.0],
            v_linear: vec![-1.0],
            interaction: 3.0,
            bound: 100.0,
            ..Default::default()
        };
        let mf = MeanField {
            m1: 4.0,
            ..Default::default()
        };
        // 0.5 + 2 + 1 + 2·0.25 − 1·2 + 3·(0.5·2)
        assert!((f.eval(2, &mf, &[0.5], &[2.0]) - 5.0).abs() < 1e-15);
        let tight = RunningCost { bound: 1.0, ..f };
        assert_eq!(tight.eval(2, &mf, &[0.5], &[2.0]), 1.0);
    }

    #[test]
    fn terminal_threshold() {
        let h = TerminalCost {
            threshold: 3,
            threshold_weight: 2.0,
            bound: 5.0,
            ..Default::default()
        };
        let mf = MeanField::default();
        assert_eq!(h.eval(2, &mf), 0.0);
        assert_eq!(h.eval(3, &mf), 2.0);
    }

    #[test]
    fn negative_bound_rejected() {
        let r = CostSpec::new(
            RunningCost {
                bound: -1.0,
                ..Default::default()
            },
            TerminalCost::default(),
        );
        assert!(r.is_err());
    }
}
