//! Minimal dense linear algebra for the GP core: square matrices, Cholesky
//! factorization, and triangular solves. Training sets stay small enough
//! (hundreds of points) that a plain O(n^3) factorization is the right tool.

// The factorization and substitution kernels are written in index form on
// purpose: they mirror their standard derivations, and every loop touches
// two buffers under different index maps.
#![allow(clippy::needless_range_loop)]

use crate::real::Real;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<R> {
    n: usize,
    data: Vec<R>,
}

impl<R: Real> SquareMatrix<R> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![R::zero(); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> R {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: R) {
        self.data[i * self.n + j] = v;
    }

    /// Adds `v` to every diagonal entry.
    pub fn add_diagonal(&mut self, v: R) {
        for i in 0..self.n {
            let cur = self.get(i, i);
            self.set(i, i, cur + v);
        }
    }

    /// Lower-triangular Cholesky factor L with A = L·Lᵀ.
    ///
    /// Returns `None` when a pivot is non-positive or non-finite, i.e. the
    /// matrix is not numerically positive definite.
    pub fn cholesky(&self) -> Option<LowerTriangular<R>> {
        let n = self.n;
        let mut l = vec![R::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.get(i, j);
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    // Negated comparison on purpose: a NaN pivot must also
                    // reject the factorization, and `NaN > 0` is false.
                    #[allow(clippy::neg_cmp_op_on_partial_ord)]
                    if !(sum > R::zero()) || !sum.is_finite() {
                        return None;
                    }
                    l[i * n + j] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Some(LowerTriangular { n, data: l })
    }

    /// Relative Frobenius distance ‖A − B‖_F / max(‖A‖_F, tiny).
    pub fn relative_frobenius_distance(&self, other: &SquareMatrix<R>) -> R {
        assert_eq!(self.n, other.n);
        let mut num = R::zero();
        let mut den = R::zero();
        for (a, b) in self.data.iter().zip(&other.data) {
            let d = *a - *b;
            num += d * d;
            den += *a * *a;
        }
        num.sqrt() / den.sqrt().max(R::of(1e-300))
    }
}

/// Lower-triangular factor produced by [`SquareMatrix::cholesky`].
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular<R> {
    n: usize,
    data: Vec<R>,
}

impl<R: Real> LowerTriangular<R> {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> R {
        self.data[i * self.n + j]
    }

    /// Solves L·x = b by forward substitution.
    pub fn forward_solve(&self, b: &[R]) -> Vec<R> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut x = vec![R::zero(); n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.get(i, k) * x[k];
            }
            x[i] = sum / self.get(i, i);
        }
        x
    }

    /// Solves Lᵀ·x = b by backward substitution.
    pub fn backward_solve(&self, b: &[R]) -> Vec<R> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut x = vec![R::zero(); n];
        for i in (0..n).rev() {
            let mut sum = b[i];
            for k in (i + 1)..n {
                sum -= self.get(k, i) * x[k];
            }
            x[i] = sum / self.get(i, i);
        }
        x
    }

    /// Solves (L·Lᵀ)·x = b.
    pub fn solve(&self, b: &[R]) -> Vec<R> {
        self.backward_solve(&self.forward_solve(b))
    }

    /// Sum of log-diagonal entries, i.e. ½·log det(L·Lᵀ).
    pub fn log_diagonal_sum(&self) -> R {
        (0..self.n)
            .map(|i| self.get(i, i).ln())
            .fold(R::zero(), |a, b| a + b)
    }

    /// Reconstructs L·Lᵀ.
    pub fn reconstruct(&self) -> SquareMatrix<R> {
        let n = self.n;
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut sum = R::zero();
                for k in 0..=i.min(j) {
                    sum += self.get(i, k) * self.get(j, k);
                }
                m.set(i, j, sum);
            }
        }
        m
    }
}
