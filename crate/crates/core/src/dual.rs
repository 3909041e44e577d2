//! Dual variables enforcing time-average constraint satisfaction.
//!
//! Constraints are expressed repository-wide as `g ≤ 0` feasible, `g > 0`
//! violation, with `g = observed impressions delta − budget` in percent
//! units. Each global step ends with one projected ascent update of the
//! multipliers from the cohort-weighted violation; the slackness `epsilon`
//! sits inside the clamp and tightens the constraints by a safety margin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

/// Weight vectors must sum to one within this tolerance.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DualError {
    #[error("cohort weights sum to {sum} (must be 1 within {WEIGHT_SUM_TOLERANCE})")]
    WeightSum { sum: f64 },
    #[error("negative cohort weight {weight}")]
    NegativeWeight { weight: f64 },
    #[error("constraint row {row} has {got} entries, expected {expected}")]
    RaggedReport { row: usize, expected: usize, got: usize },
    #[error("report has {rows} rows but {weights} weights")]
    WeightCount { rows: usize, weights: usize },
    #[error("time average of an empty history is undefined")]
    EmptyHistory,
}

/// Multiplier state shared by the dual update and the acquisition penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState<R> {
    /// One non-negative multiplier per constraint.
    pub lambda: Vec<R>,
    /// Slackness added inside the update clamp (percent units).
    pub epsilon: R,
    /// Acquisition penalty weight (unused by the update itself).
    pub eta: R,
}

impl<R: Real> DualState<R> {
    /// Fresh state with all multipliers at zero.
    pub fn new(n_constraints: usize, epsilon: R, eta: R) -> Self {
        Self {
            lambda: vec![R::zero(); n_constraints],
            epsilon,
            eta,
        }
    }

    pub fn n_constraints(&self) -> usize {
        self.lambda.len()
    }
}

/// One step's observed constraint values for every cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport<R> {
    /// `per_cohort[k][i]` = observed value of constraint `i` under cohort
    /// `k`'s policy (percent; positive means violation).
    pub per_cohort: Vec<Vec<R>>,
    /// Cohort impression-volume fractions; non-negative, sum to one.
    pub weights: Vec<R>,
}

impl<R: Real> ConstraintReport<R> {
    pub fn new(per_cohort: Vec<Vec<R>>, weights: Vec<R>) -> Result<Self, DualError> {
        let report = Self { per_cohort, weights };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<(), DualError> {
        if self.per_cohort.len() != self.weights.len() {
            return Err(DualError::WeightCount {
                rows: self.per_cohort.len(),
                weights: self.weights.len(),
            });
        }
        for w in &self.weights {
            if *w < R::zero() {
                return Err(DualError::NegativeWeight {
                    weight: w.to_f64_lossy(),
                });
            }
        }
        let sum: R = self.weights.iter().copied().sum();
        if (sum.to_f64_lossy() - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(DualError::WeightSum {
                sum: sum.to_f64_lossy(),
            });
        }
        if let Some(first) = self.per_cohort.first() {
            let n = first.len();
            for (row, g) in self.per_cohort.iter().enumerate() {
                if g.len() != n {
                    return Err(DualError::RaggedReport {
                        row,
                        expected: n,
                        got: g.len(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n_constraints(&self) -> usize {
        self.per_cohort.first().map_or(0, Vec::len)
    }
}

/// Cohort-weighted violation per constraint: component `i` is
/// `Σ_k w_k · g[k][i]`.
pub fn weighted_violation<R: Real>(report: &ConstraintReport<R>) -> Result<Vec<R>, DualError> {
    report.validate()?;
    let n = report.n_constraints();
    let mut out = vec![R::zero(); n];
    for (w, row) in report.weights.iter().zip(&report.per_cohort) {
        for (acc, g) in out.iter_mut().zip(row) {
            *acc += *w * *g;
        }
    }
    Ok(out)
}

/// Projected ascent: `lambda_i ← max(0, lambda_i + weighted_i + epsilon)`.
///
/// The unit step on the violation term is deliberate; the only tunable
/// scaling lives in the acquisition penalty via `eta`.
pub fn dual_update<R: Real>(state: &DualState<R>, weighted: &[R]) -> DualState<R> {
    assert_eq!(
        weighted.len(),
        state.lambda.len(),
        "weighted violation length must match multiplier count"
    );
    let lambda = state
        .lambda
        .iter()
        .zip(weighted)
        .map(|(l, w)| (*l + *w + state.epsilon).max(R::zero()))
        .collect();
    DualState {
        lambda,
        epsilon: state.epsilon,
        eta: state.eta,
    }
}

/// Componentwise mean of the weighted-violation history.
pub fn time_average_violation<R: Real>(history: &[Vec<R>]) -> Result<Vec<R>, DualError> {
    let first = history.first().ok_or(DualError::EmptyHistory)?;
    let mut out = vec![R::zero(); first.len()];
    for step in history {
        for (acc, v) in out.iter_mut().zip(step) {
            *acc += *v;
        }
    }
    let t = R::of(history.len() as f64);
    for acc in &mut out {
        *acc /= t;
    }
    Ok(out)
}
