use serde::{Deserialize, Serialize};

use super::de::{self, DeConfig};
use super::kernel::{
    covariance_matrix, cross_covariance, lml_from_covariance, set_kernel, Hyperparams, KernelProfile,
    Lattice,
};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, dot, Cholesky, Matrix};
use crate::scalar::Scalar;
use crate::wake::Layout;

/// Training archive: layouts and one target row (one value per objective) each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "F: Scalar + Serialize",
    deserialize = "F: Scalar + Deserialize<'de>"
))]
pub struct SetDataset<F> {
    sets: Vec<Layout<F>>,
    targets: Vec<Vec<F>>,
    objectives: usize,
}

impl<F: Scalar> SetDataset<F> {
    pub fn new(objectives: usize) -> Self {
        SetDataset {
            sets: Vec::new(),
            targets: Vec::new(),
            objectives,
        }
    }

    pub fn from_parts(sets: Vec<Layout<F>>, targets: Vec<Vec<F>>) -> Result<Self> {
        let objectives = targets.first().map_or(0, Vec::len);
        let mut d = Self::new(objectives);
        if sets.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: sets.len(),
                found: targets.len(),
            });
        }
        for (s, t) in sets.into_iter().zip(targets) {
            d.push(s, t)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, set: Layout<F>, target: Vec<F>) -> Result<()> {
        if target.len() != self.objectives {
            return Err(Error::DimensionMismatch {
                expected: self.objectives,
                found: target.len(),
            });
        }
        if set.is_empty() {
            return Err(Error::EmptySet);
        }
        self.sets.push(set);
        self.targets.push(target);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn objectives(&self) -> usize {
        self.objectives
    }

    pub fn sets(&self) -> &[Layout<F>] {
        &self.sets
    }

    pub fn targets(&self) -> &[Vec<F>] {
        &self.targets
    }

    pub fn column(&self, objective: usize) -> Vec<F> {
        self.targets.iter().map(|t| t[objective]).collect()
    }

    pub fn contains(&self, set: &Layout<F>) -> bool {
        self.sets.iter().any(|s| s == set)
    }
}

/// Search box for the hyperparameters (searched on a log10 scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparamBounds<F> {
    pub length_scale: (F, F),
    pub amplitude: (F, F),
    pub noise: (F, F),
}

impl<F: Scalar> Default for HyperparamBounds<F> {
    fn default() -> Self {
        HyperparamBounds {
            length_scale: (F::lit(10.0), F::lit(1e5)),
            amplitude: (F::lit(1e-3), F::lit(1e3)),
            noise: (F::lit(1e-8), F::one()),
        }
    }
}

impl<F: Scalar> HyperparamBounds<F> {
    fn log_box(&self) -> Result<Vec<(f64, f64)>> {
        [self.length_scale, self.amplitude, self.noise]
            .iter()
            .map(|&(lo, hi)| {
                if !(lo > F::zero()) || !(hi >= lo) || !hi.is_finite() {
                    Err(Error::param(format!(
                        "hyperparameter bounds must satisfy 0 < lo <= hi, got ({lo}, {hi})"
                    )))
                } else {
                    Ok((lo.as_f64().log10(), hi.as_f64().log10()))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions<F> {
    pub bounds: HyperparamBounds<F>,
    pub de: DeConfig,
    /// z-score the targets before fitting.
    pub normalize: bool,
}

impl<F: Scalar> Default for FitOptions<F> {
    fn default() -> Self {
        FitOptions {
            bounds: HyperparamBounds::default(),
            de: DeConfig::default(),
            normalize: true,
        }
    }
}

/// Posterior mean and variance of a set's objective value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<F> {
    pub mean: F,
    pub variance: F,
}

impl<F: Scalar> Prediction<F> {
    pub fn std_dev(&self) -> F {
        self.variance.max(F::zero()).sqrt()
    }
}

/// Persistable summary of a fitted model; the training sets themselves are
/// referenced by their position in the run's dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot<F> {
    pub hyperparams: Hyperparams<F>,
    pub target_mean: F,
    pub target_scale: F,
    pub jitter: F,
    pub log_marginal_likelihood: F,
    pub training_ids: Vec<usize>,
}

/// Set-input GP conditioned on training data with fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct SetGpModel<F> {
    hyperparams: Hyperparams<F>,
    sets: Vec<Layout<F>>,
    y: Vec<F>,
    target_mean: F,
    target_scale: F,
    chol: Cholesky<F>,
    alpha: Vec<F>,
    jitter: F,
    lml: F,
}

fn normalization<F: Scalar>(y: &[F], normalize: bool) -> (F, F) {
    if !normalize || y.is_empty() {
        return (F::zero(), F::one());
    }
    let n = F::from_usize_lossy(y.len());
    let mean = y.iter().copied().sum::<F>() / n;
    let var = y.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
    let sd = var.sqrt();
    if sd > F::lit(1e-12) * mean.abs().max(F::one()) {
        (mean, sd)
    } else {
        (mean, F::one())
    }
}

impl<F: Scalar> SetGpModel<F> {
    /// Conditions on `(sets, y)` with the given hyperparameters (in normalised-target units
    /// when `normalize` is set).
    pub fn with_hyperparams(
        sets: Vec<Layout<F>>,
        y: &[F],
        hyperparams: Hyperparams<F>,
        normalize: bool,
    ) -> Result<Self> {
        Self::with_hyperparams_on(sets, y, hyperparams, normalize, None)
    }

    /// As [`SetGpModel::with_hyperparams`], assembling the covariance from
    /// lattice distance classes when every set lies on `lattice`.
    pub fn with_hyperparams_on(
        sets: Vec<Layout<F>>,
        y: &[F],
        hyperparams: Hyperparams<F>,
        normalize: bool,
        lattice: Option<&Lattice<F>>,
    ) -> Result<Self> {
        hyperparams.validate()?;
        let k = match lattice.and_then(|l| KernelProfile::build(&sets, l)) {
            Some(p) => p.covariance(&hyperparams),
            None => covariance_matrix(&sets, &hyperparams)?,
        };
        Self::from_covariance(sets, y, hyperparams, normalize, k)
    }

    fn from_covariance(
        sets: Vec<Layout<F>>,
        y: &[F],
        hyperparams: Hyperparams<F>,
        normalize: bool,
        k: Matrix<F>,
    ) -> Result<Self> {
        if sets.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: sets.len(),
                found: y.len(),
            });
        }
        if sets.is_empty() {
            return Err(Error::param("cannot condition a GP on zero sets"));
        }
        let (target_mean, target_scale) = normalization(y, normalize);
        let yn: Vec<F> = y.iter().map(|&v| (v - target_mean) / target_scale).collect();
        let (chol, jitter) = cholesky_with_jitter(&k)?;
        let alpha = chol.solve(&yn);
        let half = F::lit(0.5);
        let lml = -half * dot(&yn, &alpha)
            - half * chol.log_det()
            - half * F::from_usize_lossy(yn.len()) * F::TAU().ln();
        Ok(SetGpModel {
            hyperparams,
            sets,
            y: yn,
            target_mean,
            target_scale,
            chol,
            alpha,
            jitter,
            lml,
        })
    }

    /// Maximises the log marginal likelihood by differential evolution over
    /// log10 hyperparameters and conditions on the winner.
    pub fn fit(
        sets: Vec<Layout<F>>,
        y: &[F],
        options: &FitOptions<F>,
        lattice: Option<&Lattice<F>>,
        seed: u64,
    ) -> Result<Self> {
        if sets.len() < 2 {
            return Err(Error::param("hyperparameter fitting needs at least two sets"));
        }
        if sets.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: sets.len(),
                found: y.len(),
            });
        }
        if sets.iter().any(Layout::is_empty) {
            return Err(Error::EmptySet);
        }
        let bounds = options.bounds.log_box()?;
        let (mean, scale) = normalization(y, options.normalize);
        let yn: Vec<F> = y.iter().map(|&v| (v - mean) / scale).collect();
        let profile = lattice.and_then(|l| KernelProfile::build(&sets, l));

        let covariance = |h: &Hyperparams<F>| -> Result<Matrix<F>> {
            match &profile {
                Some(p) => Ok(p.covariance(h)),
                None => covariance_matrix(&sets, h),
            }
        };
        let from_log = |x: &[f64]| Hyperparams {
            length_scale: F::lit(10f64.powf(x[0])),
            amplitude: F::lit(10f64.powf(x[1])),
            noise: F::lit(10f64.powf(x[2])),
        };
        let objective = |x: &[f64]| -> f64 {
            let h = from_log(x);
            covariance(&h)
                .and_then(|k| lml_from_covariance(&k, &yn))
                .map(|l| -l.as_f64())
                .unwrap_or(f64::INFINITY)
        };
        let best = de::minimise(objective, &bounds, &options.de, seed).ok_or(Error::FitFailed)?;
        let h = from_log(&best.x);
        log::debug!(
            "set-GP fit: l = {:.4e}, σ² = {:.4e}, σ_n² = {:.4e}, lml = {:.6e} after {} generations",
            h.length_scale,
            h.amplitude,
            h.noise,
            -best.value,
            best.generations
        );
        let k = covariance(&h)?;
        Self::from_covariance(sets, y, h, options.normalize, k)
    }

    pub fn hyperparams(&self) -> &Hyperparams<F> {
        &self.hyperparams
    }

    pub fn training_sets(&self) -> &[Layout<F>] {
        &self.sets
    }

    /// Normalised training targets.
    pub fn normalized_targets(&self) -> &[F] {
        &self.y
    }

    pub fn target_mean(&self) -> F {
        self.target_mean
    }

    pub fn target_scale(&self) -> F {
        self.target_scale
    }

    pub fn jitter(&self) -> F {
        self.jitter
    }

    /// Log marginal likelihood of the normalised targets.
    pub fn log_marginal_likelihood(&self) -> F {
        self.lml
    }

    pub fn snapshot(&self, training_ids: Vec<usize>) -> ModelSnapshot<F> {
        ModelSnapshot {
            hyperparams: self.hyperparams,
            target_mean: self.target_mean,
            target_scale: self.target_scale,
            jitter: self.jitter,
            log_marginal_likelihood: self.lml,
            training_ids,
        }
    }

    /// Posterior in normalised units from precomputed kernel values:
    /// `cross[i] = k_set(X', X_i)` and `self_k = k_set(X', X')`.
    /// The variance is returned unclamped.
    pub fn posterior_normalized(&self, cross: &[F], self_k: F) -> (F, F) {
        let mean = dot(cross, &self.alpha);
        let v = self.chol.solve_lower(cross);
        (mean, self_k - dot(&v, &v))
    }

    /// Converts a normalised posterior to target units, clamping the variance at zero.
    pub fn denormalize(&self, mean: F, variance: F) -> Prediction<F> {
        Prediction {
            mean: self.target_mean + self.target_scale * mean,
            variance: variance.max(F::zero()) * self.target_scale * self.target_scale,
        }
    }

    /// Normalised-unit posterior with the variance unclamped.
    pub fn predict_normalized(&self, x: &Layout<F>) -> Result<(F, F)> {
        let cross = cross_covariance(&self.sets, x, &self.hyperparams)?;
        let self_k = set_kernel(x, x, &self.hyperparams)?;
        Ok(self.posterior_normalized(&cross, self_k))
    }

    /// Posterior mean and latent-function variance at `x`, in target units.
    pub fn predict(&self, x: &Layout<F>) -> Result<Prediction<F>> {
        let (m, v) = self.predict_normalized(x)?;
        Ok(self.denormalize(m, v))
    }
}

/// Fits one model per objective column, objective `i` using seed stream `i`.
pub fn fit<F: Scalar>(
    dataset: &SetDataset<F>,
    options: &FitOptions<F>,
    lattice: Option<&Lattice<F>>,
    seed: u64,
) -> Result<Vec<SetGpModel<F>>> {
    (0..dataset.objectives())
        .map(|i| {
            SetGpModel::fit(
                dataset.sets().to_vec(),
                &dataset.column(i),
                options,
                lattice,
                crate::rng::derive_seed(seed, 0x6670, i as u64),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn random_sets(n: usize, seed: u64) -> Vec<Layout<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let k = rng.random_range(1..6);
                Layout::from_xy(
                    &(0..k)
                        .map(|_| (rng.random_range(0.0..2000.0), rng.random_range(0.0..2000.0)))
                        .collect::<Vec<_>>(),
                )
            })
            .collect()
    }

    /// Gauss-Jordan inverse with partial pivoting, independent of the Cholesky path.
    fn dense_inverse(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
        let n = a.len();
        let mut m: Vec<Vec<f64>> = a
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut row = r.clone();
                row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        let mut log_det = 0.0;
        for c in 0..n {
            let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
            m.swap(c, p);
            let piv = m[c][c];
            log_det += piv.abs().ln();
            for v in m[c].iter_mut() {
                *v /= piv;
            }
            for r in 0..n {
                if r != c {
                    let f = m[r][c];
                    let pivot_row = m[c].clone();
                    for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        (m.into_iter().map(|r| r[n..].to_vec()).collect(), log_det)
    }

    fn brute_set_kernel(a: &Layout<f64>, b: &Layout<f64>, h: &Hyperparams<f64>) -> f64 {
        let mut s = 0.0;
        for p in a.turbines() {
            for q in b.turbines() {
                let d2 = (p.x - q.x).powi(2) + (p.y - q.y).powi(2);
                s += h.amplitude * (-d2 / (2.0 * h.length_scale.powi(2))).exp();
            }
        }
        s / (a.len() * b.len()) as f64
    }

    #[test]
    fn interpolates_without_noise() {
        let sets = random_sets(15, 1);
        let y: Vec<f64> = (0..15).map(|i| (i as f64 * 0.7).sin() * 3.0 + 1.0).collect();
        let h = Hyperparams::new(300.0, 1.0, 0.0).unwrap();
        let m = SetGpModel::with_hyperparams(sets.clone(), &y, h, true).unwrap();
        assert_eq!(m.jitter(), 0.0);
        for (s, &yi) in sets.iter().zip(&y) {
            let p = m.predict(s).unwrap();
            assert!((p.mean - yi).abs() < 1e-8, "{} vs {}", p.mean, yi);
            assert!(p.variance < 1e-8);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let sets = random_sets(10, 2);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let h = Hyperparams::new(100.0, 2.5, 1e-3).unwrap();
        let m = SetGpModel::with_hyperparams(sets, &y, h, false).unwrap();
        let far = Layout::from_xy(&[(1e6, 1e6)]);
        let (mean, var) = m.predict_normalized(&far).unwrap();
        assert!(mean.abs() < 1e-12);
        assert!((var - 2.5).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_inverse_oracle() {
        for (n, seed) in [(3, 10), (8, 11), (20, 12)] {
            let sets = random_sets(n + 1, seed);
            let (train, test) = sets.split_at(n);
            let y: Vec<f64> = (0..n).map(|i| ((i * 7 % 5) as f64) - 2.0).collect();
            let h = Hyperparams::new(450.0, 1.7, 0.05).unwrap();
            let m = SetGpModel::with_hyperparams(train.to_vec(), &y, h, false).unwrap();
            let k: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| brute_set_kernel(&train[i], &train[j], &h) + if i == j { h.noise } else { 0.0 })
                        .collect()
                })
                .collect();
            let (kinv, log_det) = dense_inverse(&k);
            let alpha: Vec<f64> = kinv.iter().map(|r| r.iter().zip(&y).map(|(a, b)| a * b).sum()).collect();
            let quad: f64 = alpha.iter().zip(&y).map(|(a, b)| a * b).sum();
            let lml = -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            assert!((m.log_marginal_likelihood() - lml).abs() < 1e-8, "lml {} vs {}", m.log_marginal_likelihood(), lml);

            let x = &test[0];
            let ks: Vec<f64> = train.iter().map(|t| brute_set_kernel(x, t, &h)).collect();
            let mean: f64 = ks.iter().zip(&alpha).map(|(a, b)| a * b).sum();
            let kinv_ks: Vec<f64> = kinv.iter().map(|r| r.iter().zip(&ks).map(|(a, b)| a * b).sum()).collect();
            let var = brute_set_kernel(x, x, &h) - ks.iter().zip(&kinv_ks).map(|(a, b)| a * b).sum::<f64>();
            let p = m.predict(x).unwrap();
            assert!((p.mean - mean).abs() < 1e-8);
            assert!((p.variance - var.max(0.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn covariance_factorises_on_random_batches() {
        for b in 0..50 {
            let sets = random_sets(12, 100 + b);
            let h = Hyperparams::new(50.0 + 40.0 * b as f64, 1.0, 0.0).unwrap();
            let k = covariance_matrix(&sets, &h).unwrap();
            assert!(k.is_symmetric());
            assert!(cholesky_with_jitter(&k).is_ok(), "batch {b}");
        }
    }

    #[test]
    fn all_zero_targets_predict_zero() {
        let sets = random_sets(6, 3);
        let m = SetGpModel::with_hyperparams(sets, &[0.0; 6], Hyperparams::new(200.0, 1.0, 1e-4).unwrap(), true)
            .unwrap();
        let p = m.predict(&Layout::from_xy(&[(500.0, 500.0)])).unwrap();
        assert!(p.mean.abs() < 1e-12);
    }

    #[test]
    fn fit_is_deterministic_and_beats_generator() {
        let sets = random_sets(30, 4);
        let gen = Hyperparams::new(400.0, 1.0, 1e-2).unwrap();
        let y: Vec<f64> = sets
            .iter()
            .map(|s| s.turbines().iter().map(|t| (t.x / 400.0).sin() + (t.y / 500.0).cos()).sum::<f64>() / s.len() as f64)
            .collect();
        let opts = FitOptions::default();
        let a = SetGpModel::fit(sets.clone(), &y, &opts, None, 9).unwrap();
        let b = SetGpModel::fit(sets.clone(), &y, &opts, None, 9).unwrap();
        assert_eq!(a.hyperparams(), b.hyperparams());
        assert_eq!(a.log_marginal_likelihood(), b.log_marginal_likelihood());
        // the generator's hyperparameters, expressed for normalised targets
        let s2 = a.target_scale() * a.target_scale();
        let scaled = Hyperparams::new(gen.length_scale, gen.amplitude / s2, gen.noise / s2).unwrap();
        let at_gen = SetGpModel::with_hyperparams(sets, &y, scaled, true).unwrap();
        assert!(a.log_marginal_likelihood() >= at_gen.log_marginal_likelihood() - 1e-6);
    }

    #[test]
    fn lattice_fit_agrees_with_direct_fit() {
        let lattice = Lattice { origin: (0.0, 0.0), pitch: 246.0 };
        let mut rng = rng_from_seed(6);
        let sets: Vec<Layout<f64>> = (0..10)
            .map(|_| {
                let mut cells: Vec<(f64, f64)> = (0..rng.random_range(1..5))
                    .map(|_| ((rng.random_range(0..5) as f64) * 246.0, (rng.random_range(0..5) as f64) * 246.0))
                    .collect();
                cells.dedup();
                Layout::from_xy(&cells)
            })
            .collect();
        let y: Vec<f64> = sets.iter().map(|s| s.len() as f64).collect();
        let mut opts = FitOptions::default();
        opts.de.max_generations = 15;
        let a = SetGpModel::fit(sets.clone(), &y, &opts, Some(&lattice), 1).unwrap();
        let b = SetGpModel::fit(sets, &y, &opts, None, 1).unwrap();
        let rel = (a.hyperparams().length_scale - b.hyperparams().length_scale).abs() / b.hyperparams().length_scale;
        assert!(rel < 1e-6);
        assert!((a.log_marginal_likelihood() - b.log_marginal_likelihood()).abs() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn variance_is_nonnegative_up_to_rounding(seed in any::<u64>(), l in 20.0f64..3000.0) {
            let sets = random_sets(12, seed);
            let y: Vec<f64> = (0..12).map(|i| i as f64).collect();
            let m = SetGpModel::with_hyperparams(sets.clone(), &y, Hyperparams::new(l, 1.0, 1e-6).unwrap(), true).unwrap();
            for s in random_sets(5, seed ^ 1).iter().chain(&sets) {
                let (_, v) = m.predict_normalized(s).unwrap();
                prop_assert!(v >= -1e-8);
            }
        }

        #[test]
        fn prediction_ignores_training_order(seed in any::<u64>(), rot in 1usize..8) {
            let sets = random_sets(8, seed);
            let y: Vec<f64> = (0..8).map(|i| (i as f64).sqrt()).collect();
            let h = Hyperparams::new(500.0, 1.0, 1e-3).unwrap();
            let m1 = SetGpModel::with_hyperparams(sets.clone(), &y, h, true).unwrap();
            let (mut s2, mut y2) = (sets.clone(), y.clone());
            s2.rotate_left(rot);
            y2.rotate_left(rot);
            let m2 = SetGpModel::with_hyperparams(s2, &y2, h, true).unwrap();
            let x = &random_sets(1, seed ^ 2)[0];
            let (a, b) = (m1.predict(x).unwrap(), m2.predict(x).unwrap());
            prop_assert!((a.mean - b.mean).abs() < 1e-9);
            prop_assert!((a.variance - b.variance).abs() < 1e-9);
            prop_assert!((m1.log_marginal_likelihood() - m2.log_marginal_likelihood()).abs() < 1e-9);
        }
    }
}
