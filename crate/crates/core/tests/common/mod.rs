//! Test oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use mfjump::experiment::ExperimentConfig;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).unwrap()
}

/// Optimal transport cost `min Σ c(x,y) π(x,y)` between two discrete laws,
/// by enumerating every basic feasible coupling: a vertex of the
/// transportation polytope is supported on a spanning forest of at most
/// `m + n − 1` cells, which leaf elimination solves uniquely.
pub fn lp_transport(a: &[(usize, f64)], b: &[(usize, f64)], cost: impl Fn(usize, usize) -> f64) -> f64 {
    let (m, n) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = m + n - 1;
    let mut best = f64::INFINITY;
    let mut pick = Vec::with_capacity(k);
    subsets(&cells, k, 0, &mut pick, &mut |chosen| {
        if let Some(plan) = solve_tree(chosen, a, b) {
            let c: f64 = plan.iter().map(|&((i, j), x)| x * cost(a[i].0, b[j].0)).sum();
            best = best.min(c);
        }
    });
    best
}

fn subsets<T: Copy>(items: &[T], k: usize, start: usize, pick: &mut Vec<T>, f: &mut impl FnMut(&[T])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for s in start..items.len() {
        if items.len() - s < k - pick.len() {
            break;
        }
        pick.push(items[s]);
        subsets(items, k, s + 1, pick, f);
        pick.pop();
    }
}

fn solve_tree(cells: &[(usize, usize)], a: &[(usize, f64)], b: &[(usize, f64)]) -> Option<Vec<((usize, usize), f64)>> {
    let mut row: Vec<f64> = a.iter().map(|x| x.1).collect();
    let mut col: Vec<f64> = b.iter().map(|x| x.1).collect();
    let mut open: Vec<(usize, usize)> = cells.to_vec();
    let mut plan = Vec::new();
    while !open.is_empty() {
        let leaf = (0..open.len()).find_map(|c| {
            let (i, j) = open[c];
            if open.iter().filter(|x| x.0 == i).count() == 1 {
                Some((c, row[i]))
            } else if open.iter().filter(|x| x.1 == j).count() == 1 {
                Some((c, col[j]))
            } else {
                None
            }
        });
        let (c, x) = leaf?;
        let (i, j) = open.swap_remove(c);
        if x < -1e-15 {
            return None;
        }
        row[i] -= x;
        col[j] -= x;
        plan.push(((i, j), x));
    }
    if row.iter().chain(&col).any(|r| r.abs() > 1e-12) {
        return None;
    }
    Some(plan)
}

/// `exp(A)` of a 2×2 matrix with `a01·a10 ≥ 0`.
pub fn expm2(a: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let s = 0.5 * (a[0][0] + a[1][1]);
    let d = 0.5 * (a[0][0] - a[1][1]);
    let q = (d * d + a[0][1] * a[1][0]).sqrt();
    let (c, sh) = if q > 0.0 { (q.cosh(), q.sinh() / q) } else { (1.0, 1.0) };
    let e = s.exp();
    [
        [e * (c + sh * d), e * sh * a[0][1]],
        [e * sh * a[1][0], e * (c - sh * d)],
    ]
}
