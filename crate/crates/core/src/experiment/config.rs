//! JSON experiment configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bsde::CostSpec;
use crate::control::SolverOptions;
use crate::error::{Error, Result};
use crate::flow::{PicardOptions, Scheme, TimeGrid};
use crate::game::GameOptions;
use crate::model::{
    autocatalytic, schlogl_first, schlogl_second, ControlGrid, Knob, PolynomialCoefficients,
    PolynomialModel, QMatrix,
};
use crate::space::{Dist, StateSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Intensity preset with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum RatesConfig {
    SchloglFirst {
        beta0: f64,
        beta1: f64,
        delta1: f64,
        delta2: f64,
    },
    SchloglSecond {
        beta0: f64,
        beta2: f64,
        delta1: f64,
        delta3: f64,
    },
    Autocatalytic {
        beta1: f64,
        delta2: f64,
    },
    Polynomial(PolynomialCoefficients),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    PointMass { state: usize },
    Poisson { mean: f64 },
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Largest state `N`.
    pub n_max: usize,
    /// Background band width `N₀`: `ν_ij > 0` iff `0 < |i−j| < N₀`.
    #[serde(default = "default_band")]
    pub band: usize,
    pub background_rate: f64,
    /// Rate of the reference chain `g` on the same band; defaults to the
    /// background rate.
    #[serde(default)]
    pub reference_rate: Option<f64>,
    pub rates: RatesConfig,
    pub initial: InitialConfig,
    /// Starting state for payoffs and path samples.
    pub x0: usize,
}

fn default_band() -> usize {
    2
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub n_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerConfig {
    pub knobs: Vec<Knob>,
    pub points: Vec<Vec<f64>>,
}

/// Player grids; an absent player has the single empty control.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default)]
    pub u: Option<PlayerConfig>,
    #[serde(default)]
    pub v: Option<PlayerConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub damping: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub isaacs_tol: f64,
    pub scheme: Scheme,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = PicardOptions::default();
        let s = SolverOptions::default();
        Self {
            picard_tol: p.tol,
            picard_max_iter: p.max_iter,
            damping: p.damping,
            outer_tol: s.tol,
            max_outer: s.max_outer,
            isaacs_tol: GameOptions::default().isaacs_tol,
            scheme: Scheme::Rk4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    /// Required; there is no wall-clock default.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Random feedback controls in the optimality and saddle sweeps.
    #[serde(default = "default_random")]
    pub n_random_controls: usize,
    #[serde(default = "default_sizes")]
    pub particle_sizes: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Number of simulated paths written to `paths.csv`.
    #[serde(default)]
    pub path_dump: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            seed: None,
            n_paths: default_paths(),
            n_random_controls: default_random(),
            particle_sizes: default_sizes(),
            replicates: default_replicates(),
            path_dump: 0,
        }
    }
}

fn default_paths() -> usize {
    100_000
}
fn default_random() -> usize {
    50
}
fn default_sizes() -> Vec<usize> {
    vec![100, 1000, 10000]
}
fn default_replicates() -> usize {
    8
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Test hook: sample the reference chain with up-rates scaled by
    /// `1 + a` while the likelihood ratio keeps the declared `g`.
    pub inject_g_asymmetry: f64,
    pub n_families: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            inject_g_asymmetry: 0.0,
            n_families: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<String>,
    /// Write CSV side files next to the result document.
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, csv: true }
    }
}

/// Everything a command needs, validated and constructed.
#[derive(Clone, Debug)]
pub struct Setup {
    pub model: PolynomialModel,
    pub grid_u: ControlGrid,
    pub grid_v: ControlGrid,
    pub cost: CostSpec,
    pub xi: Dist,
    pub x0: usize,
    pub time: TimeGrid,
    pub seed: u64,
    pub n_paths: usize,
    pub solver: SolverOptions,
    pub game: GameOptions,
}

fn positive(path: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be finite and > 0, got {x}")))
    }
}

fn at<T>(path: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    })
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        config.setup()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Canonical form: fields in declaration order, defaults filled in,
    /// shortest round-trip floats.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn setup(&self) -> Result<Setup> {
        let seed = self
            .mc
            .seed
            .ok_or_else(|| Error::config("mc.seed", "missing; runs must be seeded explicitly"))?;
        let m = &self.model;
        let space = at("model.n_max", StateSpace::new(m.n_max))?;
        if m.n_max < 1 {
            return Err(Error::config("model.n_max", "must be >= 1"));
        }
        positive("model.background_rate", m.background_rate)?;
        let background = at("model.band", QMatrix::band(space, m.band, m.background_rate))?;
        let reference = match m.reference_rate {
            Some(r) => {
                positive("model.reference_rate", r)?;
                at("model.reference_rate", QMatrix::band(space, m.band, r))?
            }
            None => background.clone(),
        };
        let base = at(
            "model.rates.params",
            match m.rates {
                RatesConfig::SchloglFirst {
                    beta0,
                    beta1,
                    delta1,
                    delta2,
                } => schlogl_first(background, beta0, beta1, delta1, delta2),
                RatesConfig::SchloglSecond {
                    beta0,
                    beta2,
                    delta1,
                    delta3,
                } => schlogl_second(background, beta0, beta2, delta1, delta3),
                RatesConfig::Autocatalytic { beta1, delta2 } => autocatalytic(background, beta1, delta2),
                RatesConfig::Polynomial(c) => PolynomialModel::new(background.clone(), background, c),
            },
        )?;
        let base = at(
            "model.reference_rate",
            PolynomialModel::new(base.background().clone(), reference, *base.coefficients()),
        )?;

        let player = |name: &str, p: &Option<PlayerConfig>| -> Result<(Vec<Knob>, ControlGrid)> {
            match p {
                None => Ok((Vec::new(), ControlGrid::inert())),
                Some(p) => {
                    let grid = at(&format!("control.{name}.points"), ControlGrid::new(p.points.clone()))?;
                    Ok((p.knobs.clone(), grid))
                }
            }
        };
        let (u_knobs, grid_u) = player("u", &self.control.u)?;
        let (v_knobs, grid_v) = player("v", &self.control.v)?;
        let model = base.with_controls(u_knobs, v_knobs);
        at("control.u", model.check_grid(&grid_u, false))?;
        at("control.v", model.check_grid(&grid_v, true))?;

        at("cost", self.cost.validate())?;
        let time = at("grid", TimeGrid::new(self.grid.horizon, self.grid.n_steps))?;
        let xi = at(
            "model.initial",
            match self.model.initial {
                InitialConfig::PointMass { state } => Dist::point_mass(space, state),
                InitialConfig::Poisson { mean } => Dist::truncated_poisson(space, mean),
                InitialConfig::Uniform => Ok(Dist::uniform(space)),
            },
        )?;
        if m.x0 > m.n_max {
            return Err(Error::config("model.x0", format!("state {} outside 0..={}", m.x0, m.n_max)));
        }

        let s = &self.solver;
        positive("solver.picard_tol", s.picard_tol)?;
        positive("solver.outer_tol", s.outer_tol)?;
        positive("solver.isaacs_tol", s.isaacs_tol)?;
        if !(0.0..1.0).contains(&s.damping) {
            return Err(Error::config("solver.damping", "must lie in [0, 1)"));
        }
        if s.picard_max_iter == 0 || s.max_outer == 0 {
            return Err(Error::config("solver", "iteration limits must be >= 1"));
        }
        if self.mc.n_paths < 2 {
            return Err(Error::config("mc.n_paths", "must be >= 2"));
        }
        if self.mc.replicates == 0 {
            return Err(Error::config("mc.replicates", "must be >= 1"));
        }
        if self.mc.particle_sizes.len() < 2 || self.mc.particle_sizes.iter().any(|&n| n < 2) {
            return Err(Error::config("mc.particle_sizes", "need at least two sizes, each >= 2"));
        }
        let a = self.verify.inject_g_asymmetry;
        if !(a.is_finite() && a > -1.0) {
            return Err(Error::config("verify.inject_g_asymmetry", "must be finite and > -1"));
        }

        let picard = PicardOptions {
            tol: s.picard_tol,
            max_iter: s.picard_max_iter,
            damping: s.damping,
            scheme: s.scheme,
        };
        let solver = SolverOptions {
            tol: s.outer_tol,
            max_outer: s.max_outer,
            picard,
            scheme: s.scheme,
        };
        Ok(Setup {
            model,
            grid_u,
            grid_v,
            cost: self.cost.clone(),
            xi,
            x0: m.x0,
            time,
            seed,
            n_paths: self.mc.n_paths,
            game: GameOptions {
                solver: solver.clone(),
                isaacs_tol: s.isaacs_tol,
            },
            solver,
        })
    }
}
