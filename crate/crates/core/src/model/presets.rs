//! Polynomial (Schlögl-type) birth–death intensities and constant-rate chains.

use serde::{Deserialize, Serialize};

use super::{ControlGrid, Intensity, MeanField, QMatrix};
use crate::error::{Error, Result};
use crate::space::StateSpace;

/// Coefficients of the polynomial birth and death rates.
///
/// Up-rate `i → i+1`: `ν_{i,i+1} + s_b·(β₀ + β₁·m₁ + β₂·m₂!)`.
/// Down-rate `i → i−1`: `ν_{i,i−1} + s_d·(δ₁·m₁ + δ₂·m₂! + δ₃·m₃!)`,
/// where `m_k!` is the k-th factorial moment of `μ` and `s_b`, `s_d` are
/// control-driven scales (1 unless a [`Knob`] binds them).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolynomialCoefficients {
    pub birth_const: f64,
    pub birth_m1: f64,
    pub birth_m2_fact: f64,
    pub death_m1: f64,
    pub death_m2_fact: f64,
    pub death_m3_fact: f64,
}

impl PolynomialCoefficients {
    fn validate(&self) -> Result<()> {
        let named = [
            ("birth_const", self.birth_const),
            ("birth_m1", self.birth_m1),
            ("birth_m2_fact", self.birth_m2_fact),
            ("death_m1", self.death_m1),
            ("death_m2_fact", self.death_m2_fact),
            ("death_m3_fact", self.death_m3_fact),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }

    fn birth(&self, mf: &MeanField) -> f64 {
        self.birth_const + self.birth_m1 * mf.m1 + self.birth_m2_fact * mf.m2_fact
    }

    fn death(&self, mf: &MeanField) -> f64 {
        self.death_m1 * mf.m1 + self.death_m2_fact * mf.m2_fact + self.death_m3_fact * mf.m3_fact
    }

    fn has_mean_field(&self) -> bool {
        [
            self.birth_m1,
            self.birth_m2_fact,
            self.death_m1,
            self.death_m2_fact,
            self.death_m3_fact,
        ]
        .iter()
        .any(|&c| c != 0.0)
    }
}

/// What one coordinate of a control point drives.
///
/// Coefficient knobs replace the coefficient with the control value; the
/// two scale knobs multiply the whole birth (resp. death) mean-field term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    BirthConst,
    BirthM1,
    BirthM2Fact,
    DeathM1,
    DeathM2Fact,
    DeathM3Fact,
    BirthScale,
    DeathScale,
}

impl Knob {
    fn touches_mean_field(self) -> bool {
        !matches!(self, Knob::BirthConst | Knob::BirthScale | Knob::DeathScale)
    }
}

/// Mean-field birth–death chain with a background band matrix `ν`.
#[derive(Clone, Debug)]
pub struct PolynomialModel {
    background: QMatrix,
    reference: QMatrix,
    coeffs: PolynomialCoefficients,
    u_knobs: Vec<Knob>,
    v_knobs: Vec<Knob>,
}

impl PolynomialModel {
    /// `reference` must have exactly the active pairs of `background`, and
    /// every nearest-neighbour pair must be active.
    pub fn new(
        background: QMatrix,
        reference: QMatrix,
        coeffs: PolynomialCoefficients,
    ) -> Result<Self> {
        coeffs.validate()?;
        let space = background.space();
        if reference.space() != space {
            return Err(Error::MismatchedSpace {
                left: space.len(),
                right: reference.space().len(),
            });
        }
        for i in space.states() {
            if background.targets(i) != reference.targets(i) {
                return Err(Error::invalid(format!(
                    "reference Q-matrix active pairs differ from the background at state {i}"
                )));
            }
            let up = i < space.n_max() && !background.is_active(i, i + 1);
            let down = i > 0 && !background.is_active(i, i - 1);
            if up || down {
                return Err(Error::invalid(format!(
                    "background must make nearest-neighbour moves from state {i} active"
                )));
            }
        }
        Ok(Self {
            background,
            reference,
            coeffs,
            u_knobs: Vec::new(),
            v_knobs: Vec::new(),
        })
    }

    /// Binds control coordinates of each player to model knobs.
    pub fn with_controls(mut self, u_knobs: Vec<Knob>, v_knobs: Vec<Knob>) -> Self {
        self.u_knobs = u_knobs;
        self.v_knobs = v_knobs;
        self
    }

    pub fn coefficients(&self) -> &PolynomialCoefficients {
        &self.coeffs
    }

    pub fn background(&self) -> &QMatrix {
        &self.background
    }

    /// Checks that a grid matches the knob binding of a player and keeps all
    /// rates nonnegative.
    pub fn check_grid(&self, grid: &ControlGrid, second_player: bool) -> Result<()> {
        let knobs = if second_player {
            &self.v_knobs
        } else {
            &self.u_knobs
        };
        if grid.dim() != knobs.len() {
            return Err(Error::invalid(format!(
                "control grid dimension {} does not match {} bound knobs",
                grid.dim(),
                knobs.len()
            )));
        }
        for p in grid.points() {
            if let Some(x) = p.iter().find(|x| **x < 0.0) {
                return Err(Error::invalid(format!(
                    "control value {x} would make a rate negative"
                )));
            }
        }
        Ok(())
    }

    fn effective(&self, u: &[f64], v: &[f64]) -> (PolynomialCoefficients, f64, f64) {
        let mut c = self.coeffs;
        let (mut sb, mut sd) = (1.0, 1.0);
        let bound = self
            .u_knobs
            .iter()
            .zip(u)
            .chain(self.v_knobs.iter().zip(v));
        for (knob, &x) in bound {
            match knob {
                Knob::BirthConst => c.birth_const = x,
                Knob::BirthM1 => c.birth_m1 = x,
                Knob::BirthM2Fact => c.birth_m2_fact = x,
                Knob::DeathM1 => c.death_m1 = x,
                Knob::DeathM2Fact => c.death_m2_fact = x,
                Knob::DeathM3Fact => c.death_m3_fact = x,
                Knob::BirthScale => sb *= x,
                Knob::DeathScale => sd *= x,
            }
        }
        (c, sb, sd)
    }
}

impl Intensity for PolynomialModel {
    fn space(&self) -> StateSpace {
        self.background.space()
    }

    fn reference(&self) -> &QMatrix {
        &self.reference
    }

    fn rate(&self, _t: f64, i: usize, j: usize, mf: &MeanField, u: &[f64], v: &[f64]) -> f64 {
        if i == j || !self.background.is_active(i, j) {
            return 0.0;
        }
        let base = self.background.rate(i, j);
        if j == i + 1 {
            let (c, sb, _) = self.effective(u, v);
            base + sb * c.birth(mf)
        } else if j + 1 == i {
            let (c, _, sd) = self.effective(u, v);
            base + sd * c.death(mf)
        } else {
            base
        }
    }

    fn row(&self, _t: f64, i: usize, mf: &MeanField, u: &[f64], v: &[f64], out: &mut Vec<f64>) {
        let (c, sb, sd) = self.effective(u, v);
        let (birth, death) = (sb * c.birth(mf), sd * c.death(mf));
        out.clear();
        for &j in self.background.targets(i) {
            let mut r = self.background.rate(i, j);
            if j == i + 1 {
                r += birth;
            } else if j + 1 == i {
                r += death;
            }
            out.push(r);
        }
    }

    fn is_mean_field_free(&self) -> bool {
        !self.coeffs.has_mean_field()
            && !self
                .u_knobs
                .iter()
                .chain(&self.v_knobs)
                .any(|k| k.touches_mean_field())
    }
}

/// Schlögl's first model: birth `β₀ + β₁·m₁`, death `δ₁·m₁ + δ₂·m₂!`, on
/// top of the background `ν`, which doubles as the reference chain.
pub fn schlogl_first(
    background: QMatrix,
    beta0: f64,
    beta1: f64,
    delta1: f64,
    delta2: f64,
) -> Result<PolynomialModel> {
    let coeffs = PolynomialCoefficients {
        birth_const: beta0,
        birth_m1: beta1,
        death_m1: delta1,
        death_m2_fact: delta2,
        ..Default::default()
    };
    PolynomialModel::new(background.clone(), background, coeffs)
}

/// Schlögl's second model: birth `β₀ + β₂·m₂!`, death `δ₁·m₁ + δ₃·m₃!`.
pub fn schlogl_second(
    background: QMatrix,
    beta0: f64,
    beta2: f64,
    delta1: f64,
    delta3: f64,
) -> Result<PolynomialModel> {
    let coeffs = PolynomialCoefficients {
        birth_const: beta0,
        birth_m2_fact: beta2,
        death_m1: delta1,
        death_m3_fact: delta3,
        ..Default::default()
    };
    PolynomialModel::new(background.clone(), background, coeffs)
}

/// Autocatalytic model: Schlögl's first model with `β₀ = δ₁ = 0`.
pub fn autocatalytic(background: QMatrix, beta1: f64, delta2: f64) -> Result<PolynomialModel> {
    schlogl_first(background, 0.0, beta1, 0.0, delta2)
}

/// Time-homogeneous chain with fixed rates, independent of law and controls.
#[derive(Clone, Debug)]
pub struct ConstantRateModel {
    rates: QMatrix,
    reference: QMatrix,
}

impl ConstantRateModel {
    /// Rates may be zero on pairs that are active in the reference; such a
    /// model violates positivity and is reported by the validator.
    pub fn new(rates: Vec<Vec<f64>>, reference: QMatrix) -> Result<Self> {
        let n = reference.space().len();
        if rates.len() != n {
            return Err(Error::MismatchedSpace {
                left: rates.len(),
                right: n,
            });
        }
        let rates = QMatrix::new(rates)?;
        for i in reference.space().states() {
            if let Some(&j) = rates
                .targets(i)
                .iter()
                .find(|&&j| !reference.is_active(i, j))
            {
                return Err(Error::invalid(format!(
                    "rate {i}->{j} is positive but inactive in the reference Q-matrix"
                )));
            }
        }
        Ok(Self { rates, reference })
    }

    /// Two states with `0 → 1` at rate `a` and `1 → 0` at rate `b`; the
    /// reference chain has rates `g01`, `g10`.
    pub fn two_state(a: f64, b: f64, g01: f64, g10: f64) -> Result<Self> {
        let reference = QMatrix::new(vec![vec![0.0, g01], vec![g10, 0.0]])?;
        Self::new(vec![vec![0.0, a], vec![b, 0.0]], reference)
    }

    /// The chain whose rates equal its reference.
    pub fn reference_only(reference: QMatrix) -> Self {
        Self {
            rates: reference.clone(),
            reference,
        }
    }
}

impl Intensity for ConstantRateModel {
    fn space(&self) -> StateSpace {
        self.reference.space()
    }

    fn reference(&self) -> &QMatrix {
        &self.reference
    }

    fn rate(&self, _t: f64, i: usize, j: usize, _mf: &MeanField, _u: &[f64], _v: &[f64]) -> f64 {
        if i == j {
            0.0
        } else {
            self.rates.rate(i, j)
        }
    }

    fn is_mean_field_free(&self) -> bool {
        true
    }
}
