//! Independent reference implementations backing the acceptance suite.
//!
//! Everything here deliberately avoids the production code paths: linear
//! systems are solved by Gauss–Jordan elimination with partial pivoting
//! (the GP models use Cholesky factorization), log-determinants come from an
//! LU factorization, hypervolumes from brute-force column integration, and
//! the trust-region reference automaton re-derives the doubling / halving /
//! restart rules from scratch. Agreement between the fast implementations
//! and these slow ones is therefore evidence of correctness rather than of a
//! shared mistake.

use crate::acquisition::pareto::ParetoFront;
use crate::gp::{kernel_eval, GpModel};
use crate::trust_region::TrustRegionParams;

/// Solves `A·x = b` by Gauss–Jordan elimination with partial pivoting.
///
/// Panics on a numerically singular system: acceptance instances are
/// generated well-conditioned, so a panic marks a broken test fixture, not a
/// recoverable condition.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    assert_eq!(a.len(), n, "matrix/vector size mismatch");
    assert!(a.iter().all(|row| row.len() == n), "matrix must be square");
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut augmented = row.clone();
            augmented.push(*bi);
            augmented
        })
        .collect();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                m[i][col]
                    .abs()
                    .partial_cmp(&m[j][col].abs())
                    .expect("finite matrix entries")
            })
            .expect("non-empty pivot range");
        m.swap(col, pivot_row);
        let pivot = m[col][col];
        assert!(pivot.abs() > 1e-300, "singular system in dense solve");
        for value in &mut m[col] {
            *value /= pivot;
        }
        let normalized = m[col].clone();
        for (row, entries) in m.iter_mut().enumerate() {
            if row == col {
                continue;
            }
            let factor = entries[col];
            if factor == 0.0 {
                continue;
            }
            for (value, basis) in entries.iter_mut().zip(&normalized) {
                *value -= factor * basis;
            }
        }
    }
    m.into_iter().map(|row| row[n]).collect()
}

/// Log-determinant of a symmetric positive-definite matrix via LU
/// factorization with partial pivoting. Positive definiteness guarantees a
/// positive determinant, so the sum of log absolute pivots is the answer.
pub fn log_det_spd(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut u: Vec<Vec<f64>> = a.to_vec();
    let mut log_det = 0.0;
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                u[i][col]
                    .abs()
                    .partial_cmp(&u[j][col].abs())
                    .expect("finite matrix entries")
            })
            .expect("non-empty pivot range");
        u.swap(col, pivot_row);
        let pivot = u[col][col];
        assert!(pivot.abs() > 1e-300, "singular matrix in log-determinant");
        log_det += pivot.abs().ln();
        let (head, tail) = u.split_at_mut(col + 1);
        let basis = &head[col];
        for row in tail.iter_mut() {
            let factor = row[col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for (value, b) in row.iter_mut().zip(basis).skip(col) {
                *value -= factor * b;
            }
        }
    }
    log_det
}

/// Posterior recomputed densely at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpReference {
    pub mean: f64,
    pub variance: f64,
}

/// Rebuilds the exact jittered Gram matrix the model factorized, using its
/// standardized training inputs and the jitter it reported.
fn jittered_gram(model: &GpModel<f64>) -> Vec<Vec<f64>> {
    let x = model.standardized_inputs();
    let diagonal = model.noise_var + model.jitter_used;
    (0..x.len())
        .map(|i| {
            (0..x.len())
                .map(|j| {
                    let k = kernel_eval(&model.kernel, &x[i], &x[j])
                        .expect("kernel defined on training inputs");
                    if i == j {
                        k + diagonal
                    } else {
                        k
                    }
                })
                .collect()
        })
        .collect()
}

/// Recomputes `model.predict(x_star)` with dense solves against the same
/// jittered Gram matrix, independently of the Cholesky factors.
pub fn gp_predict_reference(model: &GpModel<f64>, x_star: &[f64]) -> GpReference {
    let xs = model.scaler().apply(x_star);
    let gram = jittered_gram(model);
    let weights = solve_dense(&gram, model.centered_targets());
    let k_star: Vec<f64> = model
        .standardized_inputs()
        .iter()
        .map(|x| kernel_eval(&model.kernel, x, &xs).expect("kernel defined at query"))
        .collect();
    let mean = model.prior_mean
        + k_star
            .iter()
            .zip(&weights)
            .map(|(k, w)| k * w)
            .sum::<f64>();
    let projected = solve_dense(&gram, &k_star);
    let prior_var = kernel_eval(&model.kernel, &xs, &xs).expect("kernel defined at query");
    let explained: f64 = k_star.iter().zip(&projected).map(|(k, p)| k * p).sum();
    GpReference {
        mean,
        variance: (prior_var - explained).max(0.0),
    }
}

/// Recomputes the log marginal likelihood with a dense solve and an LU
/// log-determinant.
pub fn gp_lml_reference(model: &GpModel<f64>) -> f64 {
    let gram = jittered_gram(model);
    let targets = model.centered_targets();
    let weights = solve_dense(&gram, targets);
    let fit: f64 = targets.iter().zip(&weights).map(|(y, w)| y * w).sum();
    let n = targets.len() as f64;
    -0.5 * fit - 0.5 * log_det_spd(&gram) - 0.5 * n * std::f64::consts::TAU.ln()
}

/// Area dominated by `front` above its reference point, by brute-force
/// column integration: the x-range is cut into `columns` equal slices and
/// each contributes `width · covered_height(x_mid)`, where the covered
/// height at an abscissa is set by the best second coordinate among points
/// whose first coordinate reaches it.
pub fn hypervolume_by_integration(front: &ParetoFront<f64>, columns: usize) -> f64 {
    assert!(columns > 0);
    let r = front.ref_point();
    let x_max = front
        .points()
        .iter()
        .map(|p| p.score_delta)
        .fold(f64::NEG_INFINITY, f64::max);
    if front.is_empty() || x_max <= r.score_delta {
        return 0.0;
    }
    let width = (x_max - r.score_delta) / columns as f64;
    let mut area = 0.0;
    for column in 0..columns {
        let x_mid = r.score_delta + (column as f64 + 0.5) * width;
        let covered = front
            .points()
            .iter()
            .filter(|p| p.score_delta >= x_mid)
            .map(|p| p.impressions_delta)
            .fold(f64::NEG_INFINITY, f64::max);
        if covered > r.impressions_delta {
            area += width * (covered - r.impressions_delta);
        }
    }
    area
}

/// Trust-region transition rules written down a second time, directly from
/// their behavioral contract: a run of `tau_succ` successes doubles the edge
/// (capped at the maximum), a run of `tau_fail` failures halves it, a halving
/// that would cross the minimum restarts at the initial edge, and any outcome
/// resets the opposite streak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceAutomaton {
    pub length: f64,
    pub success_streak: u32,
    pub failure_streak: u32,
    pub restart_count: u32,
    params: TrustRegionParams<f64>,
}

impl ReferenceAutomaton {
    pub fn new(params: TrustRegionParams<f64>) -> Self {
        Self {
            length: params.length_init,
            success_streak: 0,
            failure_streak: 0,
            restart_count: 0,
            params,
        }
    }

    pub fn observe(&mut self, success: bool) {
        if success {
            self.failure_streak = 0;
            self.success_streak += 1;
            if self.success_streak == self.params.tau_succ {
                self.success_streak = 0;
                self.length = (2.0 * self.length).min(self.params.length_max);
            }
        } else {
            self.success_streak = 0;
            self.failure_streak += 1;
            if self.failure_streak == self.params.tau_fail {
                self.failure_streak = 0;
                let halved = 0.5 * self.length;
                if halved < self.params.length_min {
                    self.restart_count += 1;
                    self.length = self.params.length_init;
                } else {
                    self.length = halved;
                }
            }
        }
    }
}
