//! Differential evolution (rand/1/bin) over a box.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeConfig {
    /// Population size is `popsize_per_dim × dimension`.
    pub popsize_per_dim: usize,
    pub max_generations: usize,
    /// Stop once `std(energies) ≤ tol·|mean(energies)|`.
    pub tol: f64,
    /// Mutation factor is drawn uniformly from this range once per generation.
    pub mutation: (f64, f64),
    pub crossover: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            popsize_per_dim: 15,
            max_generations: 200,
            tol: 1e-8,
            mutation: (0.5, 1.0),
            crossover: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub generations: usize,
    pub evaluations: usize,
}

/// Minimises `objective` inside `bounds`. Non-finite objective values count
/// as `+∞`. Returns `None` only if every evaluated point was non-finite.
pub fn minimise<G>(objective: G, bounds: &[(f64, f64)], config: &DeConfig, seed: u64) -> Option<DeResult>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    let dim = bounds.len();
    assert!(dim > 0, "differential evolution needs at least one dimension");
    let np = (config.popsize_per_dim * dim).max(5);
    let mut rng = rng_from_seed(seed);

    let to_box = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(bounds)
            .map(|(&ui, &(lo, hi))| lo + ui * (hi - lo))
            .collect()
    };
    let eval = |pop: &[Vec<f64>]| -> Vec<f64> {
        pop.par_iter()
            .map(|u| {
                let v = objective(&to_box(u));
                if v.is_finite() {
                    v
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    };

    let mut pop = latin_hypercube(np, dim, &mut rng);
    let mut energies = eval(&pop);
    let mut evaluations = np;
    let mut generations = 0;

    for _ in 0..config.max_generations {
        if converged(&energies, config.tol) {
            break;
        }
        generations += 1;
        let f = rng.random_range(config.mutation.0..=config.mutation.1);
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let [a, b, c] = distinct_three(np, i, &mut rng);
                let j_rand = rng.random_range(0..dim);
                (0..dim)
                    .map(|j| {
                        if j == j_rand || rng.random::<f64>() < config.crossover {
                            let v = pop[a][j] + f * (pop[b][j] - pop[c][j]);
                            if (0.0..=1.0).contains(&v) {
                                v
                            } else {
                                rng.random::<f64>()
                            }
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_energies = eval(&trials);
        evaluations += np;
        for (i, (t, e)) in trials.into_iter().zip(trial_energies).enumerate() {
            if e <= energies[i] {
                pop[i] = t;
                energies[i] = e;
            }
        }
    }

    let best = (0..np).min_by(|&a, &b| energies[a].total_cmp(&energies[b]))?;
    if !energies[best].is_finite() {
        return None;
    }
    Some(DeResult {
        x: to_box(&pop[best]),
        value: energies[best],
        generations,
        evaluations,
    })
}

fn converged(energies: &[f64], tol: f64) -> bool {
    if energies.iter().any(|e| !e.is_finite()) {
        return false;
    }
    let n = energies.len() as f64;
    let mean = energies.iter().sum::<f64>() / n;
    let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() <= tol * mean.abs()
}

fn distinct_three(np: usize, exclude: usize, rng: &mut Rng) -> [usize; 3] {
    let mut out = [0usize; 3];
    let mut k = 0;
    while k < 3 {
        let c = rng.random_range(0..np);
        if c != exclude && !out[..k].contains(&c) {
            out[k] = c;
            k += 1;
        }
    }
    out
}

/// Stratified initial population in the unit cube.
fn latin_hypercube(np: usize, dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut pop = vec![vec![0.0; dim]; np];
    for j in 0..dim {
        let mut strata: Vec<usize> = (0..np).collect();
        for i in (1..np).rev() {
            let k = rng.random_range(0..=i);
            strata.swap(i, k);
        }
        for (i, s) in strata.into_iter().enumerate() {
            pop[i][j] = (s as f64 + rng.random::<f64>()) / np as f64;
        }
    }
    pop
}
