//! Small dense linear algebra: square matrices and Cholesky factorisation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    n: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![F::zero(); n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { n, data })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.n + j] = v;
    }

    pub fn add_diagonal(&mut self, v: F) {
        for i in 0..self.n {
            self.data[i * self.n + i] = self.data[i * self.n + i] + v;
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<F> {
    n: usize,
    l: Vec<F>,
}

impl<F: Scalar> Cholesky<F> {
    /// Factorises a symmetric matrix. Returns `None` if a pivot is not strictly positive.
    pub fn new(a: &Matrix<F>) -> Option<Self> {
        let n = a.size();
        let mut l = vec![F::zero(); n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d = d - l[j * n + k] * l[j * n + k];
            }
            if !(d > F::zero()) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(Cholesky { n, l })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn factor(&self, i: usize, j: usize) -> F {
        self.l[i * self.n + j]
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[F]) -> Vec<F> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s = s - self.l[i * n + k] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[F]) -> Vec<F> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s = s - self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `log |A|`.
    pub fn log_det(&self) -> F {
        (0..self.n)
            .map(|i| self.l[i * self.n + i].ln())
            .sum::<F>()
            * F::lit(2.0)
    }
}

/// Diagonal jitter ladder: none, then 1e-10 growing tenfold up to 1e-6.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky with escalating diagonal jitter. Returns the factor and the jitter that was needed.
pub fn cholesky_with_jitter<F: Scalar>(a: &Matrix<F>) -> Result<(Cholesky<F>, F)> {
    for &j in JITTER_LADDER.iter() {
        let jitter = F::lit(j);
        let factor = if j == 0.0 {
            Cholesky::new(a)
        } else {
            let mut m = a.clone();
            m.add_diagonal(jitter);
            Cholesky::new(&m)
        };
        if let Some(c) = factor {
            return Ok((c, jitter));
        }
    }
    Err(Error::NotPositiveDefinite {
        jitter: *JITTER_LADDER.last().unwrap(),
    })
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}
