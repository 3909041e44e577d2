//! Gaussian-process regression on top of a Cholesky factorization of the
//! jittered Gram matrix.
//!
//! One model per (cohort, target): ads-score deltas and impression deltas are
//! fit as separate independent GPs. Inputs are standardized per dimension to
//! zero mean and unit variance using training-set statistics; the logistic
//! dot-product kernel is scale-sensitive, so raw policy/context units would
//! otherwise leak into the hyperparameters.

pub mod kernel;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kernel::{kernel_eval, KernelError, KernelSpec};

use crate::linalg::{LowerTriangular, SquareMatrix};
use crate::real::Real;

/// First jitter magnitude tried when factorizing a Gram matrix.
pub const JITTER_INITIAL: f64 = 1e-10;
/// Largest jitter allowed before the factorization is declared failed.
pub const JITTER_MAX: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("gram matrix is not positive definite even at jitter {jitter_cap}")]
    NotPositiveDefinite { jitter_cap: f64 },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("input/target counts differ: {inputs} inputs vs {targets} targets")]
    MismatchedTargets { inputs: usize, targets: usize },
    #[error("input dimension {got} does not match training dimension {expected}")]
    WrongDimension { expected: usize, got: usize },
    #[error("non-finite training target")]
    NonFiniteTarget,
    #[error("no hyperparameter candidate produced a valid fit")]
    NoViableHyperparameters,
}

/// Posterior mean and variance at a single query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorPrediction<R> {
    pub mean: R,
    /// Clamped to be non-negative after the numerical subtraction.
    pub variance: R,
}

/// Per-dimension affine input transform frozen at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler<R> {
    pub means: Vec<R>,
    pub scales: Vec<R>,
}

impl<R: Real> InputScaler<R> {
    /// Identity transform for `dim` dimensions.
    pub fn identity(dim: usize) -> Self {
        Self {
            means: vec![R::zero(); dim],
            scales: vec![R::one(); dim],
        }
    }

    /// Training-set mean and standard deviation per dimension. Dimensions
    /// with (near-)zero spread keep unit scale so constant features pass
    /// through unchanged.
    pub fn from_data(inputs: &[Vec<R>]) -> Self {
        let n = inputs.len();
        let dim = inputs[0].len();
        let nf = R::of(n as f64);
        let mut means = vec![R::zero(); dim];
        for row in inputs {
            for (m, v) in means.iter_mut().zip(row) {
                *m += *v;
            }
        }
        for m in &mut means {
            *m /= nf;
        }
        let mut scales = vec![R::zero(); dim];
        for row in inputs {
            for ((s, v), m) in scales.iter_mut().zip(row).zip(&means) {
                let d = *v - *m;
                *s += d * d;
            }
        }
        for s in &mut scales {
            *s = (*s / nf).sqrt();
            // Negated on purpose: a NaN spread must also fall back to 1.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(*s > R::of(1e-12)) {
                *s = R::one();
            }
        }
        Self { means, scales }
    }

    pub fn apply(&self, x: &[R]) -> Vec<R> {
        x.iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((v, m), s)| (*v - *m) / *s)
            .collect()
    }
}

/// Fitted GP surrogate.
///
/// `x_train` holds the standardized inputs; `y_centered` the targets minus
/// the prior mean. `chol` factors the jittered Gram matrix and `alpha` solves
/// Gram·alpha = y_centered, so prediction is two triangular solves away.
#[derive(Debug, Clone)]
pub struct GpModel<R> {
    x_train: Vec<Vec<R>>,
    y_centered: Vec<R>,
    pub kernel: KernelSpec<R>,
    pub noise_var: R,
    pub prior_mean: R,
    pub jitter_used: R,
    scaler: InputScaler<R>,
    chol: LowerTriangular<R>,
    alpha: Vec<R>,
}

/// Builds the Gram matrix `K[i][j] = k(x_i, x_j) + (noise + jitter)·1[i=j]`,
/// escalating jitter from 1e-10 by factors of 10 until Cholesky succeeds.
///
/// Returns the jittered matrix and the jitter that made it factorizable.
/// Fails with [`GpError::NotPositiveDefinite`] past the 1e-2 cap, which is
/// how a pathological sigmoid-kernel configuration surfaces.
pub fn gram_matrix<R: Real>(
    kernel: &KernelSpec<R>,
    inputs: &[Vec<R>],
    noise_var: R,
) -> Result<(SquareMatrix<R>, R), GpError> {
    let (gram, _, jitter) = gram_with_cholesky(kernel, inputs, noise_var)?;
    Ok((gram, jitter))
}

fn gram_with_cholesky<R: Real>(
    kernel: &KernelSpec<R>,
    inputs: &[Vec<R>],
    noise_var: R,
) -> Result<(SquareMatrix<R>, LowerTriangular<R>, R), GpError> {
    if inputs.is_empty() {
        return Err(GpError::EmptyTrainingSet);
    }
    let dim = inputs[0].len();
    for row in inputs {
        if row.len() != dim {
            return Err(GpError::WrongDimension {
                expected: dim,
                got: row.len(),
            });
        }
    }
    let n = inputs.len();
    let mut base = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel_eval(kernel, &inputs[i], &inputs[j])?;
            base.set(i, j, v);
            base.set(j, i, v);
        }
    }
    let mut jitter = R::of(JITTER_INITIAL);
    let cap = R::of(JITTER_MAX);
    loop {
        let mut attempt = base.clone();
        attempt.add_diagonal(noise_var + jitter);
        if let Some(chol) = attempt.cholesky() {
            return Ok((attempt, chol, jitter));
        }
        if jitter >= cap {
            return Err(GpError::NotPositiveDefinite {
                jitter_cap: JITTER_MAX,
            });
        }
        jitter = (jitter * R::of(10.0)).min(cap);
    }
}

impl<R: Real> GpModel<R> {
    /// Fits a GP with standardized inputs (the default used everywhere in
    /// the optimizer).
    pub fn fit(
        inputs: &[Vec<R>],
        targets: &[R],
        kernel: KernelSpec<R>,
        noise_var: R,
        prior_mean: R,
    ) -> Result<Self, GpError> {
        Self::fit_with(inputs, targets, kernel, noise_var, prior_mean, true)
    }

    /// Fits a GP, optionally skipping input standardization.
    pub fn fit_with(
        inputs: &[Vec<R>],
        targets: &[R],
        kernel: KernelSpec<R>,
        noise_var: R,
        prior_mean: R,
        standardize: bool,
    ) -> Result<Self, GpError> {
        if inputs.is_empty() {
            return Err(GpError::EmptyTrainingSet);
        }
        if inputs.len() != targets.len() {
            return Err(GpError::MismatchedTargets {
                inputs: inputs.len(),
                targets: targets.len(),
            });
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(GpError::NonFiniteTarget);
        }
        let scaler = if standardize {
            InputScaler::from_data(inputs)
        } else {
            InputScaler::identity(inputs[0].len())
        };
        let x_train: Vec<Vec<R>> = inputs.iter().map(|x| scaler.apply(x)).collect();
        let (_, chol, jitter_used) = gram_with_cholesky(&kernel, &x_train, noise_var)?;
        let y_centered: Vec<R> = targets.iter().map(|y| *y - prior_mean).collect();
        let alpha = chol.solve(&y_centered);
        Ok(Self {
            x_train,
            y_centered,
            kernel,
            noise_var,
            prior_mean,
            jitter_used,
            scaler,
            chol,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.x_train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_train.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x_train[0].len()
    }

    /// Standardized training inputs (for oracle checks).
    pub fn standardized_inputs(&self) -> &[Vec<R>] {
        &self.x_train
    }

    /// Centered training targets (for oracle checks).
    pub fn centered_targets(&self) -> &[R] {
        &self.y_centered
    }

    pub fn scaler(&self) -> &InputScaler<R> {
        &self.scaler
    }

    pub fn alpha(&self) -> &[R] {
        &self.alpha
    }

    /// Posterior mean and variance at `x_star`.
    pub fn predict(&self, x_star: &[R]) -> Result<PosteriorPrediction<R>, GpError> {
        if x_star.len() != self.input_dim() {
            return Err(GpError::WrongDimension {
                expected: self.input_dim(),
                got: x_star.len(),
            });
        }
        let xs = self.scaler.apply(x_star);
        let n = self.x_train.len();
        let mut k_star = vec![R::zero(); n];
        for (k, x) in k_star.iter_mut().zip(&self.x_train) {
            *k = kernel_eval(&self.kernel, x, &xs)?;
        }
        let mut mean = self.prior_mean;
        for (k, a) in k_star.iter().zip(&self.alpha) {
            mean += *k * *a;
        }
        let v = self.chol.forward_solve(&k_star);
        let explained = v.iter().fold(R::zero(), |acc, vi| acc + *vi * *vi);
        let prior_var = kernel_eval(&self.kernel, &xs, &xs)?;
        let variance = (prior_var - explained).max(R::zero());
        Ok(PosteriorPrediction { mean, variance })
    }

    /// Log marginal likelihood of the training targets:
    /// −½·yᶜᵀα − Σᵢ log Lᵢᵢ − (n/2)·log 2π.
    pub fn log_marginal_likelihood(&self) -> R {
        let n = R::of(self.x_train.len() as f64);
        let fit_term = self
            .y_centered
            .iter()
            .zip(&self.alpha)
            .fold(R::zero(), |acc, (y, a)| acc + *y * *a);
        let two_pi = R::of(std::f64::consts::TAU);
        -fit_term / R::of(2.0) - self.chol.log_diagonal_sum() - n / R::of(2.0) * two_pi.ln()
    }
}

/// Grid search over kernel and noise candidates, maximizing log marginal
/// likelihood. Candidates that fail to fit are skipped; ties keep the
/// earliest grid position (kernel-major, then noise), so the result is
/// deterministic.
pub fn select_hyperparameters<R: Real>(
    inputs: &[Vec<R>],
    targets: &[R],
    kernel_grid: &[KernelSpec<R>],
    noise_grid: &[R],
    prior_mean: R,
) -> Result<(KernelSpec<R>, R), GpError> {
    let mut best: Option<(R, usize, KernelSpec<R>, R)> = None;
    for (ki, kernel) in kernel_grid.iter().enumerate() {
        for (ni, noise) in noise_grid.iter().enumerate() {
            let flat = ki * noise_grid.len() + ni;
            match GpModel::fit(inputs, targets, kernel.clone(), *noise, prior_mean) {
                Ok(model) => {
                    let lml = model.log_marginal_likelihood();
                    if !lml.is_finite() {
                        continue;
                    }
                    let better = match &best {
                        None => true,
                        Some((best_lml, best_flat, _, _)) => {
                            lml > *best_lml || (lml == *best_lml && flat < *best_flat)
                        }
                    };
                    if better {
                        best = Some((lml, flat, kernel.clone(), *noise));
                    }
                }
                Err(_) => continue,
            }
        }
    }
    best.map(|(_, _, k, n)| (k, n))
        .ok_or(GpError::NoViableHyperparameters)
}
