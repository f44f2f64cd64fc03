use std::collections::{HashMap, HashSet};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pareto::{MonteCarlo, ParetoArchive};
use crate::rng::{rng_from_seed, Rng};
use crate::scalar::Scalar;
use crate::wake::Layout;

use super::grid::{decode, feasible, random_genome, repair, Genome, GridSpec};
use super::predict::GenomePredictor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_probability: f64,
    /// Per-bit flip probability; `None` means `1/(rows·cols)`.
    pub mutation_probability: Option<f64>,
    pub tournament_size: usize,
    pub elitism: usize,
    /// Only used for more than two objectives.
    pub monte_carlo: MonteCarlo,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 100,
            generations: 100,
            crossover_probability: 0.9,
            mutation_probability: None,
            tournament_size: 2,
            elitism: 1,
            monte_carlo: MonteCarlo::default(),
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::param("GA population must be at least 2"));
        }
        if self.tournament_size == 0 {
            return Err(Error::param("tournament size must be positive"));
        }
        if self.elitism >= self.population {
            return Err(Error::param("elitism must be smaller than the population"));
        }
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !unit(self.crossover_probability) || !self.mutation_probability.is_none_or(unit) {
            return Err(Error::param("GA probabilities must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal<F> {
    pub genome: Genome,
    pub layout: Layout<F>,
    pub ehvi: F,
    /// Distinct genomes scored.
    pub scored: usize,
}

/// Scores genomes by EHVI, memoising results.
struct Scorer<'a, F, P: ?Sized> {
    predictor: &'a P,
    archive: &'a ParetoArchive<F>,
    mc: MonteCarlo,
    cache: HashMap<Genome, F>,
    // best genome outside `exclude`; ties keep the earlier one
    best: Option<(Genome, F)>,
    exclude: &'a HashSet<Genome>,
}

impl<F: Scalar, P: GenomePredictor<F> + ?Sized> Scorer<'_, F, P> {
    fn score_all(&mut self, genomes: &[Genome]) -> Result<Vec<F>> {
        let mut fresh: Vec<&Genome> = Vec::new();
        let mut seen = HashSet::new();
        for g in genomes {
            if !self.cache.contains_key(g) && seen.insert(g) {
                fresh.push(g);
            }
        }
        let scores = fresh
            .par_iter()
            .map(|g| {
                let b = self.predictor.predict(g)?;
                self.archive.ehvi(&b, &self.mc)
            })
            .collect::<Result<Vec<F>>>()?;
        for (g, s) in fresh.into_iter().zip(scores) {
            let s = if s.is_finite() { s } else { F::neg_infinity() };
            if !self.exclude.contains(g) && self.best.as_ref().is_none_or(|(_, b)| s > *b) {
                self.best = Some((g.clone(), s));
            }
            self.cache.insert(g.clone(), s);
        }
        Ok(genomes.iter().map(|g| self.cache[g]).collect())
    }
}

fn tournament<F: Scalar>(scores: &[F], size: usize, rng: &mut Rng) -> usize {
    let mut best = rng.random_range(0..scores.len());
    for _ in 1..size {
        let c = rng.random_range(0..scores.len());
        if scores[c] > scores[best] {
            best = c;
        }
    }
    best
}

fn two_point_crossover(a: &Genome, b: &Genome, rng: &mut Rng) -> (Genome, Genome) {
    let n = a.len();
    let mut i = rng.random_range(0..=n);
    let mut j = rng.random_range(0..=n);
    if i > j {
        std::mem::swap(&mut i, &mut j);
    }
    let (mut c1, mut c2) = (a.clone(), b.clone());
    for k in i..j {
        c1.set(k, b.get(k));
        c2.set(k, a.get(k));
    }
    (c1, c2)
}

/// Binary GA maximising EHVI over feasible genomes.
///
/// Genomes in `exclude` (already evaluated layouts) take part in evolution
/// but are never returned; the best-scoring distinct genome seen instead is.
pub fn maximise_ehvi<F: Scalar, P: GenomePredictor<F> + ?Sized>(
    predictor: &P,
    archive: &ParetoArchive<F>,
    grid: &GridSpec<F>,
    config: &GaConfig,
    exclude: &HashSet<Genome>,
    seed: u64,
) -> Result<Proposal<F>> {
    grid.validate()?;
    config.validate()?;
    if archive.is_empty() {
        return Err(Error::param("EHVI maximisation needs a non-empty archive"));
    }
    let mut rng = rng_from_seed(seed);
    let p_mut = config
        .mutation_probability
        .unwrap_or(1.0 / grid.cells() as f64);
    let mut scorer = Scorer {
        predictor,
        archive,
        mc: config.monte_carlo,
        cache: HashMap::new(),
        best: None,
        exclude,
    };

    let mut pop: Vec<Genome> = (0..config.population)
        .map(|_| {
            let mut g = random_genome(grid, 1, &mut rng)?;
            repair(&mut g, grid, &mut rng);
            Ok(g)
        })
        .collect::<Result<_>>()?;
    let mut scores = scorer.score_all(&pop)?;

    for _ in 0..config.generations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut next: Vec<Genome> = order[..config.elitism].iter().map(|&i| pop[i].clone()).collect();
        while next.len() < config.population {
            let a = &pop[tournament(&scores, config.tournament_size, &mut rng)];
            let b = &pop[tournament(&scores, config.tournament_size, &mut rng)];
            let (mut c1, mut c2) = if rng.random::<f64>() < config.crossover_probability {
                two_point_crossover(a, b, &mut rng)
            } else {
                (a.clone(), b.clone())
            };
            for c in [&mut c1, &mut c2] {
                for k in 0..c.len() {
                    if rng.random::<f64>() < p_mut {
                        c.flip(k);
                    }
                }
                repair(c, grid, &mut rng);
            }
            next.push(c1);
            if next.len() < config.population {
                next.push(c2);
            }
        }
        pop = next;
        scores = scorer.score_all(&pop)?;
    }

    let scored = scorer.cache.len();
    let (genome, ehvi) = match scorer.best.take() {
        Some(b) => b,
        None => fallback(grid, exclude, &mut scorer, &mut rng)?,
    };
    debug_assert!(feasible(&genome, grid));
    Ok(Proposal {
        layout: decode(&genome, grid)?,
        genome,
        ehvi,
        scored,
    })
}

/// Every genome the GA produced was excluded: sample fresh ones.
fn fallback<F: Scalar, P: GenomePredictor<F> + ?Sized>(
    grid: &GridSpec<F>,
    exclude: &HashSet<Genome>,
    scorer: &mut Scorer<'_, F, P>,
    rng: &mut Rng,
) -> Result<(Genome, F)> {
    for _ in 0..10_000 {
        let mut g = random_genome(grid, 1, rng)?;
        repair(&mut g, grid, rng);
        if !exclude.contains(&g) {
            let s = scorer.score_all(std::slice::from_ref(&g))?[0];
            return Ok((g, s));
        }
    }
    Err(Error::NoFeasibleGenome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acq_opt::predict::FnPredictor;
    use crate::pareto::PredictiveBox;
    use crate::rng::derive_seed;

    fn grid3() -> GridSpec<f64> {
        GridSpec::new(3, 3, 246.0, 246.0).unwrap()
    }

    fn all_genomes(n: usize) -> Vec<Genome> {
        (1u32..(1 << n))
            .map(|m| Genome::new((0..n).map(|k| m >> k & 1 == 1).collect()))
            .collect()
    }

    /// Deterministic rugged landscape: means are a hash of the genome, so
    /// nothing but search finds the optimum.
    fn rugged(g: &Genome) -> PredictiveBox<f64> {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for &b in g.bits() {
            h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
        }
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        let w = ((h >> 3) & 0xff) as f64 / 255.0;
        PredictiveBox::new(vec![-u, w], vec![0.0, 0.0]).unwrap()
    }

    fn archive() -> ParetoArchive<f64> {
        ParetoArchive::from_points(&[vec![-0.5, 0.5]], vec![0.0, 1.1]).unwrap()
    }

    #[test]
    fn dominant_single_cell_is_found() {
        let target = Genome::from_cells(9, &[4]);
        let t2 = target.clone();
        let p = FnPredictor(move |g: &Genome| {
            let m = if *g == t2 { vec![-10.0, 0.1] } else { vec![-0.1 * g.popcount() as f64, 1.0] };
            PredictiveBox::new(m, vec![0.0, 0.0]).unwrap()
        });
        let a = archive();
        let exhaustive = all_genomes(9)
            .into_iter()
            .max_by(|x, y| {
                let sx = a.ehvi(&p.predict(x).unwrap(), &MonteCarlo::default()).unwrap();
                let sy = a.ehvi(&p.predict(y).unwrap(), &MonteCarlo::default()).unwrap();
                sx.total_cmp(&sy)
            })
            .unwrap();
        assert_eq!(exhaustive, target);
        let r = maximise_ehvi(&p, &a, &grid3(), &GaConfig::default(), &HashSet::new(), 3).unwrap();
        assert_eq!(r.genome, target);
        assert_eq!(r.layout.len(), 1);
    }

    #[test]
    fn finds_exhaustive_optimum_on_small_grid() {
        let a = archive();
        let p = FnPredictor(rugged);
        let mc = MonteCarlo::default();
        let score = |g: &Genome| a.ehvi(&p.predict(g).unwrap(), &mc).unwrap();
        let best = all_genomes(9).iter().map(score).fold(f64::NEG_INFINITY, f64::max);
        let cfg = GaConfig {
            generations: 50,
            ..GaConfig::default()
        };
        let hits = (0..20)
            .filter(|&t| {
                let r = maximise_ehvi(&p, &a, &grid3(), &cfg, &HashSet::new(), derive_seed(1, 0, t)).unwrap();
                r.ehvi == best
            })
            .count();
        assert!(hits >= 19, "{hits}/20");
    }

    #[test]
    fn beats_random_sampling_floor() {
        let grid = GridSpec::new(5, 5, 246.0, 246.0).unwrap();
        let a = archive();
        let p = FnPredictor(|g: &Genome| {
            // smooth trade-off with a preferred cardinality band
            let n = g.popcount() as f64;
            let spread = g.ones().map(|c| (c % 5) as f64).sum::<f64>() / n;
            PredictiveBox::new(vec![-(n / 25.0) * (0.5 + spread / 8.0), n / 30.0], vec![0.05, 0.02]).unwrap()
        });
        let mc = MonteCarlo::default();
        let seed = 77;
        let mut rng = rng_from_seed(seed);
        let floor = (0..1000)
            .map(|_| {
                let mut g = random_genome(&grid, 1, &mut rng).unwrap();
                repair(&mut g, &grid, &mut rng);
                a.ehvi(&p.predict(&g).unwrap(), &mc).unwrap()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let r = maximise_ehvi(&p, &a, &grid, &GaConfig::default(), &HashSet::new(), seed).unwrap();
        assert!(r.ehvi >= floor, "{} < {}", r.ehvi, floor);
    }

    #[test]
    fn deterministic_and_respects_exclusion() {
        let a = archive();
        let p = FnPredictor(rugged);
        let cfg = GaConfig {
            generations: 30,
            ..GaConfig::default()
        };
        let r1 = maximise_ehvi(&p, &a, &grid3(), &cfg, &HashSet::new(), 5).unwrap();
        let r2 = maximise_ehvi(&p, &a, &grid3(), &cfg, &HashSet::new(), 5).unwrap();
        assert_eq!(r1, r2);
        let exclude: HashSet<Genome> = [r1.genome.clone()].into();
        let r3 = maximise_ehvi(&p, &a, &grid3(), &cfg, &exclude, 5).unwrap();
        assert_ne!(r3.genome, r1.genome);
        assert!(r3.ehvi <= r1.ehvi);
    }

    #[test]
    fn output_is_feasible_on_tight_grid() {
        let grid = GridSpec::new(4, 4, 100.0, 246.0).unwrap();
        let p = FnPredictor(|g: &Genome| {
            PredictiveBox::new(vec![-(g.popcount() as f64), 0.0], vec![1.0, 0.0]).unwrap()
        });
        let r = maximise_ehvi(&p, &archive(), &grid, &GaConfig::default(), &HashSet::new(), 1).unwrap();
        assert!(feasible(&r.genome, &grid));
        assert!(r.layout.check_spacing(246.0).is_ok());
    }

    #[test]
    fn exhausted_grid_is_an_error() {
        let grid = GridSpec::new(1, 1, 246.0, 246.0).unwrap();
        let exclude: HashSet<Genome> = [Genome::from_cells(1, &[0])].into();
        let p = FnPredictor(rugged);
        let cfg = GaConfig { generations: 2, population: 4, ..GaConfig::default() };
        assert!(matches!(
            maximise_ehvi(&p, &archive(), &grid, &cfg, &exclude, 0),
            Err(Error::NoFeasibleGenome)
        ));
    }
}
