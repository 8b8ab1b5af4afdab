//! Acceptance battery: one pass/fail line per criterion.

mod common;

use std::time::{Duration, Instant};

use common::{expm2, load, lp_transport};
use mfjump::bsde::{
    balanced_decomposition, feynman_kac_backward, CostSpec, DriverMode, FamilyMember,
    RunningCost, TerminalCost,
};
use mfjump::control::{solve_optimal, verify_optimality};
use mfjump::experiment::{cmd_control, run_with_threads, Command, ExperimentConfig, PlayerConfig, Setup};
use mfjump::flow::{
    linear_forward, picard_fixed_point, picard_from, stream_rng, FeedbackControl, Flow, Policy, Scheme,
    TimeGrid,
};
use mfjump::game::{lower_upper_hamiltonians, solve_game, verify_saddle};
use mfjump::model::{ConstantRateModel, Intensity};
use mfjump::simulate::{likelihood_ratio_mean, payoff_mc_direct, payoff_mc_girsanov, propagation_of_chaos};
use mfjump::space::{wasserstein1, wasserstein2, Dist, StateSpace};
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn fixed_policy(s: &Setup) -> Policy {
    let space = s.model.space();
    Policy::new(
        FeedbackControl::constant(s.grid_u.clone(), s.time, space, 0).unwrap(),
        FeedbackControl::constant(s.grid_v.clone(), s.time, space, 0).unwrap(),
    )
}

fn random_sparse(space: StateSpace, max_support: usize, rng: &mut impl Rng) -> Vec<(usize, f64)> {
    let k = rng.random_range(1..=max_support);
    let mut states: Vec<usize> = Vec::new();
    while states.len() < k {
        let s = rng.random_range(0..space.len());
        if !states.contains(&s) {
            states.push(s);
        }
    }
    states.sort_unstable();
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    states.into_iter().zip(w).map(|(s, x)| (s, x / total)).collect()
}

fn dense(space: StateSpace, sparse: &[(usize, f64)]) -> Dist {
    let mut p = vec![0.0; space.len()];
    for &(s, x) in sparse {
        p[s] = x;
    }
    Dist::new(p).unwrap()
}

fn wasserstein_oracle() -> Outcome {
    let space = StateSpace::new(9).unwrap();
    let mut rng = stream_rng(1, 0);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (a, b) = (random_sparse(space, 4, &mut rng), random_sparse(space, 4, &mut rng));
        // oracle on the renormalized laws the library actually sees
        let (da, db) = (dense(space, &a), dense(space, &b));
        let a: Vec<(usize, f64)> = a.iter().map(|&(s, _)| (s, da.probs()[s])).collect();
        let b: Vec<(usize, f64)> = b.iter().map(|&(s, _)| (s, db.probs()[s])).collect();
        let w1 = lp_transport(&a, &b, |x, y| x.abs_diff(y) as f64);
        let w2 = lp_transport(&a, &b, |x, y| (x.abs_diff(y) as f64).powi(2)).sqrt();
        worst = worst
            .max((wasserstein1(&da, &db).unwrap() - w1).abs())
            .max((wasserstein2(&da, &db).unwrap() - w2).abs());
    }
    outcome(worst <= 1e-10, format!("max |W - LP| = {worst:.2e} over 200 pairs (tol 1e-10)"))
}

fn two_state_errors(n_steps: usize) -> (f64, f64) {
    let (a, b) = (0.7, 1.3);
    let model = ConstantRateModel::two_state(a, b, 1.0, 0.5).unwrap();
    let horizon = 2.0;
    let grid = TimeGrid::new(horizon, n_steps).unwrap();
    let space = StateSpace::new(1).unwrap();
    let xi = Dist::new(vec![0.8, 0.2]).unwrap();
    let policy = Policy::uncontrolled(grid, space);
    let flow = linear_forward(&model, &Flow::constant(grid, &xi), &policy, &xi, Scheme::Rk4).unwrap();
    let cost = CostSpec::new(
        RunningCost {
            constant: 0.1,
            state: 0.4,
            bound: 1.0,
            ..Default::default()
        },
        TerminalCost {
            state: 0.3,
            bound: 1.0,
            ..Default::default()
        },
    )
    .unwrap();
    let sol = feynman_kac_backward(&model, &flow, &policy, &cost, Scheme::Rk4).unwrap();
    let q = [[-a, a], [b, -b]];
    let (f, h): ([f64; 2], [f64; 2]) = ([0.1, 0.5], [0.0, 0.3]);
    let mut forward_err = 0.0f64;
    let mut backward_err = 0.0f64;
    for k in 0..grid.n_nodes() {
        let t = grid.time(k);
        let e = expm2([[q[0][0] * t, q[0][1] * t], [q[1][0] * t, q[1][1] * t]]);
        let p = flow.at(k).probs();
        for j in 0..2 {
            let exact = xi.probs()[0] * e[0][j] + xi.probs()[1] * e[1][j];
            forward_err = forward_err.max((p[j] - exact).abs());
        }
        let s = horizon - t;
        let g = expm2([
            [(q[0][0] + f[0]) * s, q[0][1] * s],
            [q[1][0] * s, (q[1][1] + f[1]) * s],
        ]);
        for i in 0..2 {
            let v = g[i][0] * h[0].exp() + g[i][1] * h[1].exp();
            backward_err = backward_err.max((sol.y(k, i) - v.ln()).abs());
        }
    }
    (forward_err, backward_err)
}

fn two_state_closed_form() -> Outcome {
    let (f400, b400) = two_state_errors(400);
    let (f10, b10) = two_state_errors(10);
    let (f20, b20) = two_state_errors(20);
    let (of, ob) = ((f10 / f20).log2(), (b10 / b20).log2());
    let passed = f400 <= 1e-8 && b400 <= 1e-8 && of >= 3.5 && ob >= 3.5;
    outcome(
        passed,
        format!("sup err forward {f400:.1e}, backward {b400:.1e} (tol 1e-8); order {of:.2}, {ob:.2} (min 3.5)"),
    )
}

fn fixed_point() -> Outcome {
    let s = load("schlogl.json").setup().unwrap();
    let policy = fixed_policy(&s);
    let opts = s.solver.picard;
    assert_eq!(opts.tol, 1e-8);
    let (flow, diag) = picard_fixed_point(&s.model, &policy, &s.xi, s.time, &opts).unwrap();
    let d = &diag.distances;
    let monotone = d.windows(2).skip(1).all(|w| w[1] < w[0]);
    let last = *d.last().unwrap();
    let again = linear_forward(&s.model, &flow, &policy, &s.xi, opts.scheme).unwrap();
    let extra = again.sup_w2(&flow).unwrap();
    let guess = Flow::constant(s.time, &Dist::truncated_poisson(s.model.space(), 10.0).unwrap());
    let (other, _) = picard_from(&s.model, &policy, &s.xi, guess, &opts).unwrap();
    let spread = other.sup_w2(&flow).unwrap();
    outcome(
        monotone && last < 1e-8 && extra < 2e-8 && spread < 1e-7,
        format!(
            "{} iterations, monotone after 2: {monotone}, last {last:.1e} (tol 1e-8), extra step {extra:.1e} (< 2e-8), guesses differ {spread:.1e} (< 1e-7)",
            d.len()
        ),
    )
}

fn girsanov_martingale() -> Outcome {
    let s = load("small.json").setup().unwrap();
    let policy = fixed_policy(&s);
    let (flow, _) = picard_fixed_point(&s.model, &policy, &s.xi, s.time, &s.solver.picard).unwrap();
    let lr = likelihood_ratio_mean(&s.model, &flow, &policy, s.x0, 100_000, s.seed, None).unwrap();
    let dev = (lr.mean - 1.0).abs();
    outcome(
        dev <= 3.0 * lr.std_error,
        format!("E[L_T] = {:.5} +- {:.1e}, |mean - 1| = {dev:.1e} (<= 3 SE)", lr.mean, lr.std_error),
    )
}

fn payoff_agreement() -> Outcome {
    let mut details = Vec::new();
    let mut passed = true;
    for name in ["small.json", "schlogl.json"] {
        let s = load(name).setup().unwrap();
        let policy = fixed_policy(&s);
        let (flow, _) = picard_fixed_point(&s.model, &policy, &s.xi, s.time, &s.solver.picard).unwrap();
        let sol = feynman_kac_backward(&s.model, &flow, &policy, &s.cost, Scheme::Rk4).unwrap();
        let ode = sol.y(0, s.x0).exp();
        let d = payoff_mc_direct(&s.model, &flow, &policy, &s.cost, s.x0, 100_000, s.seed).unwrap();
        let g = payoff_mc_girsanov(&s.model, &flow, &policy, &s.cost, s.x0, 100_000, s.seed).unwrap();
        let z = [
            (d.mean - ode).abs() / d.std_error,
            (g.mean - ode).abs() / g.std_error,
            (d.mean - g.mean).abs() / d.std_error.hypot(g.std_error),
        ];
        let worst = z.iter().fold(0.0f64, |a, &b| a.max(b));
        passed &= worst <= 3.0;
        details.push(format!("{name}: ode {ode:.5}, direct {:.5}, girsanov {:.5}, worst {worst:.2} SE", d.mean, g.mean));
    }
    outcome(passed, details.join("; "))
}

fn transform_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for name in ["schlogl.json", "small.json", "mean_field_free.json", "control.json", "game.json"] {
        let s = load(name).setup().unwrap();
        let policy = fixed_policy(&s);
        let (flow, _) = picard_fixed_point(&s.model, &policy, &s.xi, s.time, &s.solver.picard).unwrap();
        let y = mfjump::bsde::entropic_backward(&s.model, &flow, &policy, &s.cost, Scheme::Rk4).unwrap();
        let v = feynman_kac_backward(&s.model, &flow, &policy, &s.cost, Scheme::Rk4).unwrap();
        worst = worst.max(y.sup_distance(&v));
    }
    outcome(worst <= 1e-8, format!("sup |Y - ln v| = {worst:.2e} over 5 presets (tol 1e-8)"))
}

/// Brute-force `F(z)`: pair values laid out as `a = iu·n_v + iv`.
fn driver(family: &[FamilyMember], g: &[f64], y: f64, z: &[f64], mode: DriverMode) -> f64 {
    let values: Vec<f64> = family
        .iter()
        .map(|m| y * m.running + m.ell.iter().zip(z).zip(g).map(|((l, z), g)| l * z * g).sum::<f64>())
        .collect();
    let (n_u, n_v, outer_max) = match mode {
        DriverMode::Min => return values.iter().cloned().fold(f64::INFINITY, f64::min),
        DriverMode::Max => return values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        DriverMode::MaxMin { n_u, n_v } => (n_u, n_v, true),
        DriverMode::MinMax { n_u, n_v } => (n_u, n_v, false),
    };
    if outer_max {
        let inner = |iv: usize| (0..n_u).map(|iu| values[iu * n_v + iv]).fold(f64::INFINITY, f64::min);
        (0..n_v).map(inner).fold(f64::NEG_INFINITY, f64::max)
    } else {
        let inner = |iu: usize| (0..n_v).map(|iv| values[iu * n_v + iv]).fold(f64::NEG_INFINITY, f64::max);
        (0..n_u).map(inner).fold(f64::INFINITY, f64::min)
    }
}

fn balanced_residual() -> Outcome {
    let mut rng = stream_rng(3, 0);
    let mut worst = 0.0f64;
    let mut positive = true;
    let mut bracketed = true;
    for k in 0..100 {
        let width = rng.random_range(1..=4);
        let (n_u, n_v) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let g: Vec<f64> = (0..width).map(|_| rng.random_range(0.1..2.0)).collect();
        let family: Vec<FamilyMember> = (0..n_u * n_v)
            .map(|_| FamilyMember {
                running: rng.random_range(-1.0..1.0),
                ell: (0..width).map(|_| rng.random_range(-0.95..2.0)).collect(),
            })
            .collect();
        let y = rng.random_range(-1.0..1.0);
        let z: Vec<f64> = (0..width).map(|_| rng.random_range(-2.0..2.0)).collect();
        let zbar: Vec<f64> = (0..width).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mode = [
            DriverMode::Min,
            DriverMode::Max,
            DriverMode::MaxMin { n_u, n_v },
            DriverMode::MinMax { n_u, n_v },
        ][k % 4];
        let d = balanced_decomposition(&family, &g, y, &z, &zbar, mode).unwrap();
        // recompute both sides independently of the library's residual
        let lhs = driver(&family, &g, y, &z, mode) - driver(&family, &g, y, &zbar, mode);
        let rhs: f64 = (0..width).map(|j| d.ell_hat[j] * (z[j] - zbar[j]) * g[j]).sum();
        worst = worst.max((lhs - rhs).abs());
        positive &= d.ell_hat.iter().all(|&l| 1.0 + l > 0.0);
        for j in 0..width {
            let lo = family.iter().map(|m| m.ell[j]).fold(f64::INFINITY, f64::min);
            let hi = family.iter().map(|m| m.ell[j]).fold(f64::NEG_INFINITY, f64::max);
            bracketed &= d.ell_hat[j] >= lo - 1e-12 && d.ell_hat[j] <= hi + 1e-12;
        }
    }
    outcome(
        worst < 1e-10 && positive && bracketed,
        format!("max residual {worst:.1e} (tol 1e-10), 1 + l_hat > 0: {positive}, within family hull: {bracketed}"),
    )
}

fn comparison_ordering() -> Outcome {
    let s = load("control.json").setup().unwrap();
    let r = solve_optimal(&s.model, &s.grid_u, &s.cost, &s.xi, s.time, &s.solver).unwrap();
    let rep = verify_optimality(&s.model, &r, &s.cost, &s.xi, s.x0, 50, s.seed, &s.solver).unwrap();
    let worst = rep
        .entries
        .iter()
        .filter(|e| e.label != "u_star")
        .min_by(|a, b| a.slack_min.total_cmp(&b.slack_min))
        .unwrap();
    let n_const = rep.entries.iter().filter(|e| e.label.starts_with("constant")).count();
    let n_random = rep.entries.iter().filter(|e| e.label.starts_with("random")).count();
    outcome(
        worst.slack_min >= -1e-6 && n_const == s.grid_u.len() && n_random == 50,
        format!(
            "min (Y^u - Y*) = {:.2e} at {:?} ({}) over {n_const} grid + {n_random} random controls (>= -1e-6)",
            worst.slack_min, worst.worst_node, worst.label
        ),
    )
}

fn optimality_conditions() -> Outcome {
    let run = cmd_control(&load("control.json")).unwrap();
    let o = &run.document.output;
    let hg = o["hamiltonian_gap"].as_f64().unwrap();
    let cg = o["consistency_gap"].as_f64().unwrap();
    let slack = o["optimality"]["min_slack"].as_f64().unwrap();
    let mc = &o["mc"];
    let (ln_j, se, y0) = (
        mc["log_mean"].as_f64().unwrap(),
        mc["log_std_error"].as_f64().unwrap(),
        mc["y0"].as_f64().unwrap(),
    );
    let mc_ok = (ln_j - y0).abs() <= 3.0 * se;
    outcome(
        hg == 0.0 && cg < 1e-6 && slack >= -1e-6 && mc_ok,
        format!(
            "hamiltonian_gap {hg:e}, consistency_gap {cg:.1e}, sweep slack {slack:.2e}, ln J MC {ln_j:.5} vs Y* {y0:.5} ({:.2} SE)",
            (ln_j - y0).abs() / se
        ),
    )
}

fn game_value() -> Outcome {
    let config = load("game.json");
    let s = config.setup().unwrap();
    let r = solve_game(&s.model, &s.grid_u, &s.grid_v, &s.cost, &s.xi, s.time, &s.game).unwrap();
    let saddle = verify_saddle(&s.model, &r, &s.cost, &s.xi, s.x0, 50, s.seed, &s.game).unwrap();

    // weak duality at random laws and jumps, beyond the solution's own Z
    let mut rng = stream_rng(s.seed, 99);
    let mut duality = r.isaacs.min_duality;
    for _ in 0..500 {
        let mu = Dist::new((0..s.model.space().len()).map(|_| rng.random::<f64>()).collect()).unwrap();
        let i = rng.random_range(0..s.model.space().len());
        let z: Vec<f64> = s.model.targets(i).iter().map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = lower_upper_hamiltonians(&s.model, &mu, 0.5, i, &z, &s.grid_u, &s.grid_v, &s.cost);
        duality = duality.min(p.upper - p.lower);
    }
    let margins = [saddle.lower_margin.unwrap(), saddle.upper_margin.unwrap()];
    let n_dev = saddle.deviations.len();

    // a singleton V with the v knob at 1 is the control problem of u
    let mut single = config.clone();
    single.control.v = Some(PlayerConfig {
        knobs: vec![mfjump::model::Knob::BirthScale],
        points: vec![vec![1.0]],
    });
    let mut control = config.clone();
    control.control.v = None;
    control.cost.running.v_linear.clear();
    let mut single_cost = single.cost.clone();
    single_cost.running.v_linear.clear();
    single.cost = single_cost;
    let game_doc = run_with_threads(Command::Game, &single, 4).unwrap().document;
    let control_doc = cmd_control(&control).unwrap().document;
    let ydiff = (game_doc.output["y0"].as_f64().unwrap() - control_doc.output["y0"].as_f64().unwrap()).abs();
    let same_policy = game_doc.output["u_hat"]["index"] == control_doc.output["u_star"]["index"];
    let (ss, sc) = (single.setup().unwrap(), control.setup().unwrap());
    let rg = solve_game(&ss.model, &ss.grid_u, &ss.grid_v, &ss.cost, &ss.xi, ss.time, &ss.game).unwrap();
    let rc = solve_optimal(&sc.model, &sc.grid_u, &sc.cost, &sc.xi, sc.time, &sc.solver).unwrap();
    let field = rg.sol.sup_distance(&rc.sol_star);

    let passed = duality >= 0.0
        && r.ordering_margin >= 0.0
        && r.isaacs_gap < 1e-12
        && margins.iter().all(|&m| m >= -1e-6)
        && n_dev >= 100
        && ydiff <= 1e-10
        && field <= 1e-10
        && same_policy;
    outcome(
        passed,
        format!(
            "min(H_up - H_low) {duality:.1e}, Y_up - Y_low >= {:.1e}, Isaacs gap {:.1e} (< 1e-12), saddle margins {:.1e}/{:.1e} over {n_dev} deviations (>= -1e-6), singleton-V vs control: Y0 diff {ydiff:.1e}, field {field:.1e} (<= 1e-10), same policy {same_policy}",
            r.ordering_margin, r.isaacs_gap, margins[0], margins[1]
        ),
    )
}

fn propagation_of_chaos_fit() -> Outcome {
    let s = load("schlogl.json").setup().unwrap();
    let policy = fixed_policy(&s);
    let (flow, _) = picard_fixed_point(&s.model, &policy, &s.xi, s.time, &s.solver.picard).unwrap();
    let rep = propagation_of_chaos(&s.model, &policy, &s.xi, &flow, &[100, 1000, 10000], 8, s.seed).unwrap();
    outcome(
        rep.exponent <= -0.35,
        format!("W1 {:?}, fitted exponent {:.3} (<= -0.35)", rep.mean_w1, rep.exponent),
    )
}

fn quick(name: &str) -> ExperimentConfig {
    let mut c = load(name);
    c.mc.n_paths = 5_000;
    c.mc.n_random_controls = 4;
    c.mc.particle_sizes = vec![50, 200];
    c.mc.replicates = 2;
    c
}

fn determinism() -> Outcome {
    let jobs = [
        (Command::Flow, "schlogl.json"),
        (Command::Simulate, "small.json"),
        (Command::Verify, "small.json"),
        (Command::Control, "control.json"),
        (Command::Game, "game.json"),
    ];
    let mut mismatched = Vec::new();
    for (cmd, name) in jobs {
        let config = quick(name);
        let runs: Vec<String> = [1, 1, 4]
            .iter()
            .map(|&t| run_with_threads(cmd, &config, t).unwrap().document.to_json())
            .collect();
        if runs.iter().any(|r| r != &runs[0]) {
            mismatched.push(format!("{cmd:?}"));
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("5 commands x (2 runs at 1 thread + 1 run at 4 threads); mismatched: {mismatched:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 12] = [
        ("wasserstein oracle equivalence", wasserstein_oracle, 5),
        ("two-state closed form", two_state_closed_form, 5),
        ("fixed-point certification", fixed_point, 30),
        ("girsanov martingale", girsanov_martingale, 60),
        ("triple payoff agreement", payoff_agreement, 120),
        ("entropic/linear transform equivalence", transform_equivalence, 10),
        ("balanced-driver residual", balanced_residual, 5),
        ("comparison ordering", comparison_ordering, 120),
        ("optimality conditions", optimality_conditions, 180),
        ("game value and saddle", game_value, 180),
        ("propagation-of-chaos diagnostic", propagation_of_chaos_fit, 180),
        ("determinism", determinism, 60),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f, budget)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(*budget);
        let ok = out.passed && in_time;
        failed += usize::from(!ok);
        println!(
            "[{}] criterion {:>2} {name}: {} [{:.1} s, budget {budget} s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
