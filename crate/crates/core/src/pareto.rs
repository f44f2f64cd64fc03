//! Dominance, hypervolume and expected hypervolume improvement.
//!
//! Everything here minimises. Callers negate objectives that are maximised
//! before handing points in.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::scalar::{normal_cdf, normal_pdf, Scalar};

/// `a` dominates `b`: no worse anywhere and strictly better somewhere.
pub fn dominates<F: Scalar>(a: &[F], b: &[F]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(dominates_unchecked(a, b))
}

#[inline]
fn dominates_unchecked<F: Scalar>(a: &[F], b: &[F]) -> bool {
    let mut strict = false;
    for (&x, &y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

#[inline]
fn weakly_dominates<F: Scalar>(a: &[F], b: &[F]) -> bool {
    a.iter().zip(b).all(|(&x, &y)| x <= y)
}

fn strictly_inside<F: Scalar>(p: &[F], reference: &[F]) -> bool {
    p.iter().zip(reference).all(|(&x, &r)| x < r)
}

/// Indices of the non-dominated members of `points`; of several equal points only the first is kept.
pub fn non_dominated_indices<F: Scalar>(points: &[Vec<F>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points.iter().enumerate().any(|(j, q)| {
                dominates_unchecked(q, &points[i]) || (j < i && q == &points[i])
            })
        })
        .collect()
}

/// Exact hypervolume dominated by `points` and bounded by `reference`.
///
/// Every point must lie strictly below the reference in each coordinate.
/// Dominated points are allowed and contribute nothing.
pub fn hypervolume<F: Scalar>(points: &[Vec<F>], reference: &[F]) -> Result<F> {
    for p in points {
        if p.len() != reference.len() {
            return Err(Error::DimensionMismatch {
                expected: reference.len(),
                found: p.len(),
            });
        }
        if !strictly_inside(p, reference) {
            return Err(Error::OutsideReference {
                point: p.iter().map(|v| v.as_f64()).collect(),
                reference: reference.iter().map(|v| v.as_f64()).collect(),
            });
        }
    }
    Ok(hv_unchecked(points.to_vec(), reference))
}

fn hv_unchecked<F: Scalar>(mut points: Vec<Vec<F>>, reference: &[F]) -> F {
    match reference.len() {
        0 => F::zero(),
        1 => points
            .iter()
            .map(|p| reference[0] - p[0])
            .fold(F::zero(), F::max),
        2 => {
            points.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap().then(a[1].partial_cmp(&b[1]).unwrap()));
            let mut area = F::zero();
            let mut ceiling = reference[1];
            for p in &points {
                if p[1] < ceiling {
                    area = area + (reference[0] - p[0]) * (ceiling - p[1]);
                    ceiling = p[1];
                }
            }
            area
        }
        d => {
            // slice along the last objective
            points.sort_by(|a, b| a[d - 1].partial_cmp(&b[d - 1]).unwrap());
            let mut total = F::zero();
            for i in 0..points.len() {
                let upper = if i + 1 < points.len() {
                    points[i + 1][d - 1]
                } else {
                    reference[d - 1]
                };
                let depth = upper - points[i][d - 1];
                if depth > F::zero() {
                    let slice: Vec<Vec<F>> = points[..=i].iter().map(|p| p[..d - 1].to_vec()).collect();
                    total = total + depth * hv_unchecked(slice, &reference[..d - 1]);
                }
            }
            total
        }
    }
}

/// Independent Gaussian predictive distribution per objective.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveBox<F> {
    pub mean: Vec<F>,
    pub std_dev: Vec<F>,
}

impl<F: Scalar> PredictiveBox<F> {
    pub fn new(mean: Vec<F>, std_dev: Vec<F>) -> Result<Self> {
        if mean.len() != std_dev.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: std_dev.len(),
            });
        }
        if std_dev.iter().any(|&s| !(s >= F::zero())) {
            return Err(Error::param("predictive standard deviations must be non-negative"));
        }
        Ok(PredictiveBox { mean, std_dev })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Monte Carlo settings for EHVI with more than two objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        MonteCarlo {
            samples: 10_000,
            seed: 0,
        }
    }
}

/// Non-dominated points with a reference point strictly above all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive<F> {
    points: Vec<Vec<F>>,
    reference: Vec<F>,
}

impl<F: Scalar> ParetoArchive<F> {
    pub fn new(reference: Vec<F>) -> Self {
        ParetoArchive {
            points: Vec::new(),
            reference,
        }
    }

    /// Filters `points` down to the non-dominated ones.
    pub fn from_points(points: &[Vec<F>], reference: Vec<F>) -> Result<Self> {
        let mut a = Self::new(reference);
        for p in points {
            a.insert(p.clone())?;
        }
        Ok(a)
    }

    pub fn points(&self) -> &[Vec<F>] {
        &self.points
    }

    pub fn reference(&self) -> &[F] {
        &self.reference
    }

    pub fn dim(&self) -> usize {
        self.reference.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Adds `point` unless it is weakly dominated by a member; evicts members it dominates.
    /// Returns whether the archive changed.
    pub fn insert(&mut self, point: Vec<F>) -> Result<bool> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: point.len(),
            });
        }
        if !strictly_inside(&point, &self.reference) {
            return Err(Error::OutsideReference {
                point: point.iter().map(|v| v.as_f64()).collect(),
                reference: self.reference.iter().map(|v| v.as_f64()).collect(),
            });
        }
        if self.points.iter().any(|p| weakly_dominates(p, &point)) {
            return Ok(false);
        }
        self.points.retain(|p| !dominates_unchecked(&point, p));
        self.points.push(point);
        Ok(true)
    }

    pub fn hypervolume(&self) -> F {
        hv_unchecked(self.points.clone(), &self.reference)
    }

    /// `HV(P ∪ {y}) − HV(P)`; zero if `y` is dominated or not strictly inside the reference.
    pub fn hv_improvement(&self, y: &[F]) -> F {
        if y.len() != self.dim() || !strictly_inside(y, &self.reference) {
            return F::zero();
        }
        if self.points.iter().any(|p| weakly_dominates(p, y)) {
            return F::zero();
        }
        if self.dim() == 2 {
            let strips = self.strips();
            return strips
                .windows(2)
                .map(|w| {
                    let (a_lo, b) = (w[0].0, w[0].1);
                    let a_hi = w[1].0;
                    let width = a_hi - a_lo.max(y[0]);
                    let height = b - y[1];
                    if width > F::zero() && height > F::zero() {
                        width * height
                    } else {
                        F::zero()
                    }
                })
                .sum();
        }
        let mut with = self.points.clone();
        with.push(y.to_vec());
        (hv_unchecked(with, &self.reference) - self.hypervolume()).max(F::zero())
    }

    /// Staircase of the non-dominated region in two dimensions: `(a_i, b_i)`
    /// with `a_0 = −∞`, `b_0 = r_2`, the archive sorted by the first
    /// objective, and a closing `(r_1, −∞)`. Strip `i` spans
    /// `a_i ≤ f_1 < a_{i+1}`, `f_2 < b_i`.
    fn strips(&self) -> Vec<(F, F)> {
        let mut sorted = self.points.clone();
        sorted.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        let mut s = Vec::with_capacity(sorted.len() + 2);
        s.push((F::neg_infinity(), self.reference[1]));
        s.extend(sorted.iter().map(|p| (p[0], p[1])));
        s.push((self.reference[0], F::neg_infinity()));
        s
    }

    /// Expected hypervolume improvement under independent Gaussians.
    ///
    /// Two objectives use the exact strip decomposition; more fall back to
    /// Monte Carlo with `mc`.
    pub fn ehvi(&self, pred: &PredictiveBox<F>, mc: &MonteCarlo) -> Result<F> {
        if pred.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: pred.dim(),
            });
        }
        if self.dim() == 2 {
            Ok(self.ehvi_2d(pred))
        } else {
            Ok(self.ehvi_monte_carlo(pred, mc))
        }
    }

    /// With `ψ(t) = E[(t − Y)⁺]`, the improvement inside strip `i` factorises
    /// into `(ψ₁(a_{i+1}) − ψ₁(a_i))·ψ₂(b_i)` because the objectives are independent.
    fn ehvi_2d(&self, pred: &PredictiveBox<F>) -> F {
        let strips = self.strips();
        let psi = |t: F, mu: F, sd: F| -> F {
            if t == F::neg_infinity() {
                return F::zero();
            }
            if sd > F::zero() {
                let z = (t - mu) / sd;
                (t - mu) * normal_cdf(z) + sd * normal_pdf(z)
            } else {
                (t - mu).max(F::zero())
            }
        };
        let (m1, s1) = (pred.mean[0], pred.std_dev[0]);
        let (m2, s2) = (pred.mean[1], pred.std_dev[1]);
        let total: F = strips
            .windows(2)
            .map(|w| {
                let width = psi(w[1].0, m1, s1) - psi(w[0].0, m1, s1);
                let height = psi(w[0].1, m2, s2);
                width.max(F::zero()) * height
            })
            .sum();
        total.max(F::zero())
    }

    /// Sample-mean EHVI estimate from `mc.samples` draws.
    pub fn ehvi_monte_carlo(&self, pred: &PredictiveBox<F>, mc: &MonteCarlo) -> F {
        let mut rng = rng_from_seed(mc.seed);
        let n = mc.samples.max(1);
        let mut sum = F::zero();
        let mut y = vec![F::zero(); self.dim()];
        for _ in 0..n {
            for (k, yk) in y.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *yk = pred.mean[k] + pred.std_dev[k] * F::lit(z);
            }
            sum = sum + self.hv_improvement(&y);
        }
        sum / F::from_usize_lossy(n)
    }
}

/// Reference point from the worst observed value per objective, pushed out by
/// `margin` times the larger of the observed range and the magnitude.
///
/// For a single point `(1, 1)` and margin 0.1 this gives `(1.1, 1.1)`. Every
/// input point lies strictly below the result.
pub fn update_reference<F: Scalar>(points: &[Vec<F>], margin: F) -> Result<Vec<F>> {
    let first = points
        .first()
        .ok_or_else(|| Error::param("reference point needs at least one objective vector"))?;
    if !(margin > F::zero()) {
        return Err(Error::param("reference margin must be positive"));
    }
    let dim = first.len();
    let mut r = Vec::with_capacity(dim);
    for k in 0..dim {
        let mut worst = F::neg_infinity();
        let mut best = F::infinity();
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            worst = worst.max(p[k]);
            best = best.min(p[k]);
        }
        let mut spread = (worst - best).max(worst.abs());
        if !(spread > F::zero()) {
            spread = F::one();
        }
        let mut rk = worst + margin * spread;
        if !(rk > worst) {
            rk = worst + F::epsilon() * worst.abs().max(F::one());
        }
        r.push(rk);
    }
    Ok(r)
}
