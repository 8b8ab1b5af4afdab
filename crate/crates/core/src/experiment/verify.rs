//! Regression battery run by `mfjump verify`.

use rand::Rng;
use serde::Serialize;

use super::commands::{fixed_policy, simulate, solve_flow};
use super::config::{ExperimentConfig, Setup};
use crate::bsde::{
    balanced_decomposition, comparison_check, entropic_backward, feynman_kac_backward, CostSpec, DriverMode,
    FamilyMember, COMPARISON_TOLERANCE,
};
use crate::control::TRANSFORM_TOLERANCE;
use crate::error::Result;
use crate::flow::stream_rng;
use crate::model::Intensity;
use crate::simulate::{likelihood_ratio_mean, propagation_of_chaos, ChaosReport, MartingaleReport};
use crate::space::{wasserstein1, wasserstein2, Dist, StateSpace};

pub const WASSERSTEIN_TOLERANCE: f64 = 1e-10;
pub const FIXED_POINT_STEP_TOLERANCE: f64 = 2e-8;
pub const BOUNDARY_MASS_TOLERANCE: f64 = 1e-6;
pub const BALANCED_TOLERANCE: f64 = 1e-10;
pub const CHAOS_EXPONENT_BOUND: f64 = -0.35;

/// Streams of the battery's own random draws, clear of the path streams.
const METRIC_STREAM: u64 = 1 << 40;
const FAMILY_STREAM: u64 = (1 << 40) + 1;

/// One invariant: `passed` is `value ≤ threshold` unless noted.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyOutput {
    pub checks: Vec<Check>,
    pub chaos: ChaosReport,
    pub injected_g_asymmetry: f64,
}

fn random_dist(space: StateSpace, rng: &mut impl Rng) -> Dist {
    // sparse supports exercise the CDF breakpoints
    let w: Vec<f64> = space
        .states()
        .map(|_| if rng.random_bool(0.5) { rng.random::<f64>() } else { 0.0 })
        .collect();
    Dist::new(w).unwrap_or_else(|_| Dist::uniform(space))
}

fn wasserstein_examples() -> Result<f64> {
    let s = StateSpace::new(4)?;
    let mut err = 0.0f64;
    for i in s.states() {
        for j in s.states() {
            let (a, b) = (Dist::point_mass(s, i)?, Dist::point_mass(s, j)?);
            let d = i.abs_diff(j) as f64;
            err = err.max((wasserstein1(&a, &b)? - d).abs());
            err = err.max((wasserstein2(&a, &b)? - d).abs());
        }
    }
    let split = Dist::new(vec![0.5, 0.0, 0.5, 0.0, 0.0])?;
    let one = Dist::point_mass(s, 1)?;
    err = err.max((wasserstein1(&split, &one)? - 1.0).abs());
    err = err.max((wasserstein2(&split, &one)? - 1.0).abs());
    err = err.max(wasserstein2(&split, &split)?);
    Ok(err)
}

/// Largest violation of symmetry, the triangle inequality and `W₁ ≤ W₂`.
fn wasserstein_metric(space: StateSpace, seed: u64, n: usize) -> Result<f64> {
    let mut rng = stream_rng(seed, METRIC_STREAM);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (a, b, c) = (random_dist(space, &mut rng), random_dist(space, &mut rng), random_dist(space, &mut rng));
        for w in [wasserstein1, wasserstein2] {
            let (ab, ba, bc, ac) = (w(&a, &b)?, w(&b, &a)?, w(&b, &c)?, w(&a, &c)?);
            worst = worst.max((ab - ba).abs()).max(ac - ab - bc);
        }
        worst = worst.max(wasserstein1(&a, &b)? - wasserstein2(&a, &b)?);
    }
    Ok(worst)
}

/// Residual of the balanced decomposition over random families, or
/// infinity when `1 + ℓ̂ > 0` fails.
fn balanced_residual(seed: u64, n: usize) -> Result<f64> {
    let mut rng = stream_rng(seed, FAMILY_STREAM);
    let mut worst = 0.0f64;
    for k in 0..n {
        let width = rng.random_range(1..=4);
        let (n_u, n_v) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let g: Vec<f64> = (0..width).map(|_| rng.random_range(0.1..2.0)).collect();
        let family: Vec<FamilyMember> = (0..n_u * n_v)
            .map(|_| FamilyMember {
                running: rng.random_range(-1.0..1.0),
                ell: (0..width).map(|_| rng.random_range(-0.9..2.0)).collect(),
            })
            .collect();
        let y = rng.random_range(-1.0..1.0);
        let z: Vec<f64> = (0..width).map(|_| rng.random_range(-2.0..2.0)).collect();
        let zbar: Vec<f64> = (0..width).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mode = match k % 4 {
            0 => DriverMode::Min,
            1 => DriverMode::Max,
            2 => DriverMode::MaxMin { n_u, n_v },
            _ => DriverMode::MinMax { n_u, n_v },
        };
        let d = balanced_decomposition(&family, &g, y, &z, &zbar, mode)?;
        if d.ell_hat.iter().any(|&l| 1.0 + l <= 0.0) {
            return Ok(f64::INFINITY);
        }
        worst = worst.max(d.residual);
    }
    Ok(worst)
}

/// `|d| / se`, read as 0 or infinity when `se = 0`.
fn sigmas(d: f64, se: f64) -> f64 {
    if se > 0.0 {
        d.abs() / se
    } else if d == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub(crate) fn run_battery(config: &ExperimentConfig, s: &Setup) -> Result<VerifyOutput> {
    let space = s.model.space();
    let policy = fixed_policy(s)?;
    let mut checks = vec![
        Check::at_most("wasserstein_examples", wasserstein_examples()?, WASSERSTEIN_TOLERANCE),
        Check::at_most("wasserstein_metric", wasserstein_metric(space, s.seed, 200)?, WASSERSTEIN_TOLERANCE),
        Check::at_most(
            "balanced_residual",
            balanced_residual(s.seed, config.verify.n_families)?,
            BALANCED_TOLERANCE,
        ),
    ];

    let (flow, fo) = solve_flow(s, &policy)?;
    checks.push(Check::at_most("fixed_point_step", fo.extra_step, FIXED_POINT_STEP_TOLERANCE));
    checks.push(Check::at_most(
        "boundary_mass",
        fo.diagnostics.sup_boundary_mass,
        BOUNDARY_MASS_TOLERANCE,
    ));

    let y = entropic_backward(&s.model, &flow, &policy, &s.cost, s.solver.scheme)?;
    let lin = feynman_kac_backward(&s.model, &flow, &policy, &s.cost, s.solver.scheme)?;
    checks.push(Check::at_most("transform_equivalence", y.sup_distance(&lin), TRANSFORM_TOLERANCE));

    // raising the state cost must raise Y everywhere
    let mut higher = s.cost.clone();
    higher.running.state += 0.05;
    higher.running.bound += 0.05 * space.n_max() as f64;
    let higher = CostSpec::new(higher.running, higher.terminal)?;
    let y_high = entropic_backward(&s.model, &flow, &policy, &higher, s.solver.scheme)?;
    let cmp = comparison_check(&y_high, &y, COMPARISON_TOLERANCE)?;
    checks.push(Check::at_most("comparison_ordering", -cmp.min_margin, COMPARISON_TOLERANCE));

    let sim = simulate(s, &policy)?;
    let a = config.verify.inject_g_asymmetry;
    let lr = if a != 0.0 {
        let sampling = s.model.reference().scaled(|i, j| if j > i { 1.0 + a } else { 1.0 })?;
        likelihood_ratio_mean(&s.model, &flow, &policy, s.x0, s.n_paths, s.seed, Some(&sampling))?
    } else {
        sim.output.likelihood_ratio.clone()
    };
    checks.push(Check::at_most("girsanov_martingale", sigmas(lr.mean - 1.0, lr.std_error), 3.0));
    let worst_pair = sim
        .output
        .agreement
        .iter()
        .map(|r| sigmas(r.difference, r.combined_se))
        .fold(0.0f64, f64::max);
    checks.push(Check {
        name: "payoff_agreement".to_string(),
        value: worst_pair,
        threshold: 3.0,
        passed: sim.output.agreement.iter().all(|r| r.passed),
    });
    checks.push(Check {
        name: "martingale_pairs".to_string(),
        value: sim.output.martingale.max_abs_z,
        threshold: MartingaleReport::FLAG_SE,
        passed: sim.output.martingale.flagged.is_empty(),
    });

    let chaos = propagation_of_chaos(
        &s.model,
        &policy,
        &s.xi,
        &flow,
        &config.mc.particle_sizes,
        config.mc.replicates,
        s.seed,
    )?;
    checks.push(Check::at_most("propagation_of_chaos", chaos.exponent, CHAOS_EXPONENT_BOUND));

    Ok(VerifyOutput {
        checks,
        chaos,
        injected_g_asymmetry: a,
    })
}
