use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, dot, Matrix};
use crate::scalar::Scalar;
use crate::wake::{Layout, Turbine};

/// RBF hyperparameters: length scale `l` (m), amplitude `σ²` and noise variance `σ_n²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams<F> {
    pub length_scale: F,
    pub amplitude: F,
    pub noise: F,
}

impl<F: Scalar> Hyperparams<F> {
    pub fn new(length_scale: F, amplitude: F, noise: F) -> Result<Self> {
        let h = Hyperparams {
            length_scale,
            amplitude,
            noise,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > F::zero())
            || !(self.amplitude > F::zero())
            || !(self.noise >= F::zero())
            || !self.length_scale.is_finite()
            || !self.amplitude.is_finite()
            || !self.noise.is_finite()
        {
            return Err(Error::param(format!(
                "hyperparameters need l > 0, σ² > 0, σ_n² ≥ 0 (got {:?})",
                self
            )));
        }
        Ok(())
    }

    #[inline]
    fn inv_two_l2(&self) -> F {
        F::one() / (F::lit(2.0) * self.length_scale * self.length_scale)
    }
}

/// `σ²·exp(−‖a − b‖² / 2l²)`. Observation noise is not part of the point kernel.
#[inline]
pub fn base_kernel<F: Scalar>(a: &Turbine<F>, b: &Turbine<F>, h: &Hyperparams<F>) -> F {
    h.amplitude * (-a.distance_squared(b) * h.inv_two_l2()).exp()
}

fn ordered<'a, F: Scalar>(a: &'a Layout<F>, b: &'a Layout<F>) -> (&'a Layout<F>, &'a Layout<F>) {
    // Summing in a fixed orientation makes k(X1, X2) == k(X2, X1) bit for bit.
    let key = |l: &Layout<F>| {
        l.turbines()
            .iter()
            .map(|t| (t.x.as_f64().to_bits(), t.y.as_f64().to_bits()))
            .collect::<Vec<_>>()
    };
    match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Less => (a, b),
        std::cmp::Ordering::Greater => (b, a),
        std::cmp::Ordering::Equal => {
            if key(a) <= key(b) {
                (a, b)
            } else {
                (b, a)
            }
        }
    }
}

/// Mean of the point kernel over all pairs: `(1/|X1||X2|) Σ Σ k(x_i, x_j)`.
pub fn set_kernel<F: Scalar>(x1: &Layout<F>, x2: &Layout<F>, h: &Hyperparams<F>) -> Result<F> {
    if x1.is_empty() || x2.is_empty() {
        return Err(Error::EmptySet);
    }
    let (a, b) = ordered(x1, x2);
    let scale = h.inv_two_l2();
    let mut sum = F::zero();
    for p in a.turbines() {
        for q in b.turbines() {
            sum = sum + (-p.distance_squared(q) * scale).exp();
        }
    }
    let n = F::from_usize_lossy(a.len()) * F::from_usize_lossy(b.len());
    Ok(h.amplitude * sum / n)
}

/// `K_ij = k_set(X_i, X_j)` with `σ_n²` added once to each diagonal entry.
pub fn covariance_matrix<F: Scalar>(sets: &[Layout<F>], h: &Hyperparams<F>) -> Result<Matrix<F>> {
    let n = sets.len();
    let mut k = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let v = set_kernel(&sets[i], &sets[j], h)?;
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k.add_diagonal(h.noise);
    Ok(k)
}

/// `k_set(X', X_i)` for every training set.
pub fn cross_covariance<F: Scalar>(
    sets: &[Layout<F>],
    x: &Layout<F>,
    h: &Hyperparams<F>,
) -> Result<Vec<F>> {
    sets.iter().map(|s| set_kernel(x, s, h)).collect()
}

/// Gaussian log marginal likelihood `−½ yᵀK⁻¹y − ½ log|K| − (N/2) log 2π`.
pub fn log_marginal_likelihood<F: Scalar>(
    sets: &[Layout<F>],
    y: &[F],
    h: &Hyperparams<F>,
) -> Result<F> {
    if sets.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: sets.len(),
            found: y.len(),
        });
    }
    let k = covariance_matrix(sets, h)?;
    lml_from_covariance(&k, y)
}

pub(crate) fn lml_from_covariance<F: Scalar>(k: &Matrix<F>, y: &[F]) -> Result<F> {
    let (chol, _) = cholesky_with_jitter(k)?;
    let alpha = chol.solve(y);
    let half = F::lit(0.5);
    let n = F::from_usize_lossy(y.len());
    Ok(-half * dot(y, &alpha) - half * chol.log_det() - half * n * F::TAU().ln())
}

/// Lattice `origin + (col·pitch, row·pitch)` that training sets may lie on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice<F> {
    pub origin: (F, F),
    pub pitch: F,
}

impl<F: Scalar> Lattice<F> {
    fn snap(&self, t: &Turbine<F>) -> Option<(i64, i64)> {
        let cx = (t.x - self.origin.0) / self.pitch;
        let cy = (t.y - self.origin.1) / self.pitch;
        let (rx, ry) = (cx.round(), cy.round());
        let tol = F::lit(1e-9);
        if (cx - rx).abs() > tol || (cy - ry).abs() > tol {
            return None;
        }
        Some((rx.to_i64()?, ry.to_i64()?))
    }
}

/// Pairwise squared-distance histograms of lattice-aligned sets.
///
/// On a lattice every squared distance is `k·pitch²` for an integer `k`, so
/// `k_set(X_i, X_j) = σ²/(|X_i||X_j|) Σ_k count_ij(k)·exp(−k·pitch²/2l²)`.
/// Building the histograms once makes each covariance assembly during
/// hyperparameter search cost one exponential per distance class instead of
/// one per turbine pair.
#[derive(Debug, Clone)]
pub struct KernelProfile<F> {
    n: usize,
    pitch2: F,
    max_class: usize,
    // upper triangle (i <= j), row-major: (class, count) runs
    pairs: Vec<Vec<(u32, u32)>>,
    inv_sizes: Vec<F>,
}

impl<F: Scalar> KernelProfile<F> {
    /// Returns `None` if any set is empty or off the lattice.
    pub fn build(sets: &[Layout<F>], lattice: &Lattice<F>) -> Option<Self> {
        let cells: Vec<Vec<(i64, i64)>> = sets
            .iter()
            .map(|s| {
                if s.is_empty() {
                    None
                } else {
                    s.turbines().iter().map(|t| lattice.snap(t)).collect()
                }
            })
            .collect::<Option<_>>()?;
        let span = |f: fn(&(i64, i64)) -> i64| {
            let all = cells.iter().flatten().map(f);
            let (lo, hi) = all.fold((i64::MAX, i64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
            (hi - lo).max(0) as usize
        };
        let (sx, sy) = (span(|c| c.0), span(|c| c.1));
        let max_class = sx * sx + sy * sy;
        let n = sets.len();
        let mut counts = vec![0u32; max_class + 1];
        let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                for a in &cells[i] {
                    for b in &cells[j] {
                        let dx = (a.0 - b.0).unsigned_abs() as usize;
                        let dy = (a.1 - b.1).unsigned_abs() as usize;
                        counts[dx * dx + dy * dy] += 1;
                    }
                }
                let mut run = Vec::new();
                for (k, c) in counts.iter_mut().enumerate() {
                    if *c > 0 {
                        run.push((k as u32, *c));
                        *c = 0;
                    }
                }
                pairs.push(run);
            }
        }
        Some(KernelProfile {
            n,
            pitch2: lattice.pitch * lattice.pitch,
            max_class,
            pairs,
            inv_sizes: sets
                .iter()
                .map(|s| F::one() / F::from_usize_lossy(s.len()))
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Same matrix as [`covariance_matrix`] up to rounding.
    pub fn covariance(&self, h: &Hyperparams<F>) -> Matrix<F> {
        let scale = self.pitch2 * h.inv_two_l2();
        let e: Vec<F> = (0..=self.max_class)
            .map(|k| (-F::from_usize_lossy(k) * scale).exp())
            .collect();
        let mut m = Matrix::zeros(self.n);
        let mut idx = 0;
        for i in 0..self.n {
            for j in i..self.n {
                let s: F = self.pairs[idx]
                    .iter()
                    .map(|&(k, c)| F::lit(c as f64) * e[k as usize])
                    .sum();
                let v = h.amplitude * s * self.inv_sizes[i] * self.inv_sizes[j];
                m.set(i, j, v);
                m.set(j, i, v);
                idx += 1;
            }
        }
        m.add_diagonal(h.noise);
        m
    }
}
