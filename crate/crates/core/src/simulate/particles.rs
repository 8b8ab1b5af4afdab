//! Interacting particle system whose empirical law drives the intensities.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{exponential, pick};
use crate::error::{Error, Result};
use crate::flow::{stream_rng, Flow, Policy};
use crate::model::{Intensity, MeanField};
use crate::space::{wasserstein1, Dist};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleReport {
    pub n_particles: usize,
    pub seed: u64,
    pub n_events: usize,
    /// `W₁` between the empirical law at `T` and the reference flow at `T`.
    pub w1_terminal: f64,
}

fn counts_to_dist(counts: &[usize], n: usize) -> Result<Dist> {
    Dist::new(counts.iter().map(|&c| c as f64 / n as f64).collect())
}

fn run<M: Intensity + ?Sized>(
    model: &M,
    policy: &Policy,
    xi: &Dist,
    n: usize,
    reference: &Flow,
    rng: &mut ChaCha8Rng,
) -> Result<(Flow, usize)> {
    let grid = reference.grid();
    let states = model.space().len();
    let cdf = xi.cdf();
    let mut counts = vec![0usize; states];
    for _ in 0..n {
        let r: f64 = rng.random();
        let i = cdf.iter().position(|&c| r < c).unwrap_or(states - 1);
        counts[i] += 1;
    }
    let mut dists = vec![counts_to_dist(&counts, n)?];
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); states];
    let mut weights = vec![0.0; states];
    let mut t = 0.0;
    let mut n_events = 0;
    for k in 0..grid.n_steps() {
        let end = grid.time(k + 1);
        loop {
            let mf = MeanField::of(&counts_to_dist(&counts, n)?);
            let mut total = 0.0;
            for i in 0..states {
                weights[i] = 0.0;
                if counts[i] == 0 {
                    continue;
                }
                model.row(t, i, &mf, policy.u.point(k, i), policy.v.point(k, i), &mut rows[i]);
                weights[i] = counts[i] as f64 * rows[i].iter().sum::<f64>();
                total += weights[i];
            }
            if total <= 0.0 {
                t = end;
                break;
            }
            let next = t + exponential(rng) / total;
            if next >= end {
                // memoryless: restart the clock with the next interval's controls
                t = end;
                break;
            }
            t = next;
            let i = pick(&weights, total, rng);
            let exit: f64 = rows[i].iter().sum();
            let j = model.targets(i)[pick(&rows[i], exit, rng)];
            counts[i] -= 1;
            counts[j] += 1;
            n_events += 1;
        }
        dists.push(counts_to_dist(&counts, n)?);
    }
    Ok((Flow::new(grid, dists)?, n_events))
}

/// Simulates `n_particles` chains interacting through their empirical law
/// by exact event-by-event sampling, and compares the terminal empirical
/// law with `reference` (normally the mean-field fixed point).
pub fn particle_system<M: Intensity + ?Sized>(
    model: &M,
    policy: &Policy,
    xi: &Dist,
    n_particles: usize,
    seed: u64,
    reference: &Flow,
) -> Result<(Flow, ParticleReport)> {
    let mut rng = stream_rng(seed, 0);
    particle_with(model, policy, xi, n_particles, seed, reference, &mut rng)
}

fn particle_with<M: Intensity + ?Sized>(
    model: &M,
    policy: &Policy,
    xi: &Dist,
    n_particles: usize,
    seed: u64,
    reference: &Flow,
    rng: &mut ChaCha8Rng,
) -> Result<(Flow, ParticleReport)> {
    if n_particles < 2 {
        return Err(Error::invalid("particle system needs at least two particles"));
    }
    if xi.len() != model.space().len() || reference.space().len() != xi.len() {
        return Err(Error::MismatchedSpace {
            left: model.space().len(),
            right: xi.len(),
        });
    }
    let (flow, n_events) = run(model, policy, xi, n_particles, reference, rng)?;
    let w1_terminal = wasserstein1(flow.terminal(), reference.terminal())?;
    Ok((
        flow,
        ParticleReport {
            n_particles,
            seed,
            n_events,
            w1_terminal,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosReport {
    pub sizes: Vec<usize>,
    pub replicates: usize,
    /// Replicate mean of `W₁(empirical_T, μ_T)` per size.
    pub mean_w1: Vec<f64>,
    /// Least-squares slope of `ln mean_w1` against `ln n`.
    pub exponent: f64,
    pub seed: u64,
}

/// Slope of the least-squares line through `(ln n, ln value)`.
pub fn fit_decay_exponent(sizes: &[usize], values: &[f64]) -> f64 {
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Terminal `W₁` error of the particle system over several sizes, each
/// averaged over `replicates` independent runs.
pub fn propagation_of_chaos<M: Intensity + ?Sized>(
    model: &M,
    policy: &Policy,
    xi: &Dist,
    reference: &Flow,
    sizes: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<ChaosReport> {
    if sizes.len() < 2 || replicates == 0 {
        return Err(Error::invalid("need at least two sizes and one replicate"));
    }
    let jobs: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|s| (0..replicates).map(move |r| (s, r)))
        .collect();
    let w1 = jobs
        .par_iter()
        .map(|&(s, r)| {
            let mut rng = stream_rng(seed, (s * replicates + r) as u64);
            particle_with(model, policy, xi, sizes[s], seed, reference, &mut rng).map(|x| x.1.w1_terminal)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean_w1: Vec<f64> = w1
        .chunks(replicates)
        .map(|c| c.iter().sum::<f64>() / replicates as f64)
        .collect();
    Ok(ChaosReport {
        exponent: fit_decay_exponent(sizes, &mean_w1),
        sizes: sizes.to_vec(),
        replicates,
        mean_w1,
        seed,
    })
}
