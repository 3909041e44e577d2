//! Covariance kernels for the GP surrogates.
//!
//! The primary kernel is a logistic function of the input dot product,
//! matching the saturating response curves this library models:
//!
//! ```text
//! k(x, y) = sigma_f^2 / (1 + exp(-(a * <x, y> + b)))
//! ```
//!
//! It is not positive semidefinite in general, so the Gram assembly in
//! [`crate::gp`] escalates diagonal jitter and reports a typed failure when
//! that is not enough. A squared-exponential kernel is available as the
//! well-behaved fallback.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::{dot, Real};

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum KernelError {
    #[error("input dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("non-finite value in kernel input")]
    NonFiniteInput,
    #[error("invalid kernel parameters: {0}")]
    InvalidParameters(String),
}

/// Kernel family plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec<R> {
    /// Logistic-of-dot-product kernel with slope `a`, bias `b`, and signal
    /// variance `sigma_f2`.
    Sigmoid { a: R, b: R, sigma_f2: R },
    /// Squared-exponential kernel. `lengthscale` holds either one entry
    /// (shared across dimensions) or one entry per input dimension.
    Rbf { lengthscale: Vec<R>, sigma_f2: R },
}

impl<R: Real> KernelSpec<R> {
    pub fn sigmoid(a: R, b: R, sigma_f2: R) -> Self {
        KernelSpec::Sigmoid { a, b, sigma_f2 }
    }

    pub fn rbf(lengthscale: Vec<R>, sigma_f2: R) -> Self {
        KernelSpec::Rbf {
            lengthscale,
            sigma_f2,
        }
    }

    /// Isotropic RBF helper: one shared lengthscale.
    pub fn rbf_iso(lengthscale: R, sigma_f2: R) -> Self {
        KernelSpec::Rbf {
            lengthscale: vec![lengthscale],
            sigma_f2,
        }
    }

    pub fn signal_variance(&self) -> R {
        match self {
            KernelSpec::Sigmoid { sigma_f2, .. } => *sigma_f2,
            KernelSpec::Rbf { sigma_f2, .. } => *sigma_f2,
        }
    }

    /// Validates hyperparameters against an input dimension.
    // Comparisons are negated on purpose throughout: a NaN parameter must
    // fail validation, and NaN compares false against every bound.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self, dim: usize) -> Result<(), KernelError> {
        match self {
            KernelSpec::Sigmoid { a, b, sigma_f2 } => {
                if !a.is_finite() || !b.is_finite() {
                    return Err(KernelError::InvalidParameters(
                        "slope and bias must be finite".into(),
                    ));
                }
                if !(*sigma_f2 >= R::zero()) {
                    return Err(KernelError::InvalidParameters(
                        "signal variance must be >= 0".into(),
                    ));
                }
                Ok(())
            }
            KernelSpec::Rbf {
                lengthscale,
                sigma_f2,
            } => {
                if lengthscale.is_empty() {
                    return Err(KernelError::InvalidParameters(
                        "lengthscale must be non-empty".into(),
                    ));
                }
                if lengthscale.len() != 1 && lengthscale.len() != dim {
                    return Err(KernelError::InvalidParameters(format!(
                        "lengthscale has {} entries for dimension {}",
                        lengthscale.len(),
                        dim
                    )));
                }
                if lengthscale.iter().any(|l| !(*l > R::zero()) || !l.is_finite()) {
                    return Err(KernelError::InvalidParameters(
                        "lengthscale components must be positive".into(),
                    ));
                }
                if !(*sigma_f2 >= R::zero()) {
                    return Err(KernelError::InvalidParameters(
                        "signal variance must be >= 0".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Evaluates the kernel at a pair of inputs. Symmetric in its arguments.
pub fn kernel_eval<R: Real>(
    kernel: &KernelSpec<R>,
    x_i: &[R],
    x_j: &[R],
) -> Result<R, KernelError> {
    if x_i.len() != x_j.len() {
        return Err(KernelError::DimensionMismatch {
            left: x_i.len(),
            right: x_j.len(),
        });
    }
    if x_i.iter().chain(x_j).any(|v| !v.is_finite()) {
        return Err(KernelError::NonFiniteInput);
    }
    kernel.validate(x_i.len())?;
    let value = match kernel {
        KernelSpec::Sigmoid { a, b, sigma_f2 } => {
            let t = *a * dot(x_i, x_j) + *b;
            *sigma_f2 / (R::one() + (-t).exp())
        }
        KernelSpec::Rbf {
            lengthscale,
            sigma_f2,
        } => {
            let mut q = R::zero();
            for (d, (xi, xj)) in x_i.iter().zip(x_j).enumerate() {
                let l = if lengthscale.len() == 1 {
                    lengthscale[0]
                } else {
                    lengthscale[d]
                };
                let s = (*xi - *xj) / l;
                q += s * s;
            }
            *sigma_f2 * (-q / R::of(2.0)).exp()
        }
    };
    if !value.is_finite() {
        return Err(KernelError::NonFiniteInput);
    }
    Ok(value)
}
