//! Synthetic ad-load environment: ground-truth cohort responses, a
//! time-varying context process, noisy observation, and platform-level
//! aggregation.
//!
//! One step is one day. Each cohort's latent response to a policy θ is a
//! saturating exponential in the projected policy mass for the score metric
//! and linear for the impressions metric, both modulated by context, so the
//! feasible region genuinely moves over time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::pareto::ObjectivePair;
use crate::config::{CohortSection, EnvironmentSection, ExperimentConfig};
use crate::dual::{ConstraintReport, DualError};
use crate::real::{dot, Real};
use crate::rng::{derive_rng, StreamPurpose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("expected {expected} cohort decisions, got {got}")]
    DecisionCount { expected: usize, got: usize },
    #[error("policy has {got} dimensions, environment expects {expected}")]
    PolicyDim { expected: usize, got: usize },
    #[error("aggregation weight count {weights} does not match pair count {pairs}")]
    AggregationMismatch { weights: usize, pairs: usize },
    #[error(transparent)]
    Constraint(#[from] DualError),
}

/// Ad-placement intensity knobs, one weight per policy dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyVector<R>(pub Vec<R>);

impl<R: Real> PolicyVector<R> {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![R::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[R] {
        &self.0
    }
}

/// Time-varying system context: index 0 is the seasonality phase in
/// [−1, 1], index 1 the traffic-shift multiplier around 1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextVector<R>(pub Vec<R>);

impl<R: Real> ContextVector<R> {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[R] {
        &self.0
    }

    /// The resting context the responses are anchored to: zero seasonality
    /// phase and unit traffic multiplier.
    pub fn baseline(dim: usize) -> Self {
        let mut z = vec![R::zero(); dim];
        if dim > 1 {
            z[1] = R::one();
        }
        Self(z)
    }
}

/// One cohort's ground-truth response parameters. Direction vectors are
/// unit-normalized at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec<R> {
    pub id: usize,
    pub volume_weight: R,
    pub saturation: R,
    pub rate: R,
    pub impression_gain: R,
    pub noise_sd_score: R,
    pub noise_sd_impressions: R,
    pub context_sensitivity: Vec<R>,
    pub score_direction: Vec<R>,
    pub impression_direction: Vec<R>,
}

fn normalized<R: Real>(v: &[R]) -> Vec<R> {
    let norm = dot(v, v).sqrt();
    if norm > R::zero() {
        v.iter().map(|x| *x / norm).collect()
    } else {
        v.to_vec()
    }
}

impl<R: Real> CohortSpec<R> {
    fn from_config(c: &CohortSection<R>) -> Self {
        Self {
            id: c.id,
            volume_weight: c.volume_weight,
            saturation: c.saturation,
            rate: c.rate,
            impression_gain: c.impression_gain,
            noise_sd_score: c.noise_sd_score,
            noise_sd_impressions: c.noise_sd_impressions,
            context_sensitivity: c.context_sensitivity.clone(),
            score_direction: normalized(&c.score_direction),
            impression_direction: normalized(&c.impression_direction),
        }
    }
}

/// The simulated platform: cohort ground truths, the context process, and
/// the constraint budgets observations are scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment<R> {
    pub cohorts: Vec<CohortSpec<R>>,
    pub policy_dim: usize,
    pub context_dim: usize,
    pub ar_rho: R,
    pub ar_sigma: R,
    /// Per-constraint impression budgets (percent).
    pub impression_budgets: Vec<R>,
}

impl<R: Real> Environment<R> {
    pub fn from_config(
        env: &EnvironmentSection<R>,
        policy_dim: usize,
        impression_budgets: Vec<R>,
    ) -> Self {
        Self {
            cohorts: env.cohorts.iter().map(CohortSpec::from_config).collect(),
            policy_dim,
            context_dim: env.context_dim,
            ar_rho: env.ar_rho,
            ar_sigma: env.ar_sigma,
            impression_budgets,
        }
    }

    /// Environment for a full experiment config: cohorts and context process
    /// from its environment section, budgets and policy dimension from the
    /// experiment section.
    pub fn from_experiment(config: &crate::config::ExperimentConfig<R>) -> Self {
        Self::from_config(
            &config.environment,
            config.experiment.policy_dim,
            config.experiment.impression_budgets.clone(),
        )
    }

    pub fn cohort_count(&self) -> usize {
        self.cohorts.len()
    }

    pub fn volume_weights(&self) -> Vec<R> {
        self.cohorts.iter().map(|c| c.volume_weight).collect()
    }

    /// Context at step `t ≥ 1`: weekly seasonality plus an AR(1) traffic
    /// shock replayed deterministically from the master seed. The shock
    /// history is regenerated from per-step derived streams, so the value at
    /// `t` never depends on which steps were sampled before.
    pub fn sample_context(&self, master_seed: u64, t: u64) -> ContextVector<R> {
        // Reduce the phase before the sine so large t costs no precision.
        let phase = 2.0 * std::f64::consts::PI * ((t % 7) as f64) / 7.0;
        let mut shock = 0.0f64;
        let rho = self.ar_rho.to_f64_lossy();
        let sigma = self.ar_sigma.to_f64_lossy();
        for step in 1..=t {
            let mut rng = derive_rng(master_seed, StreamPurpose::Context, step, 0);
            let xi: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            shock = rho * shock + sigma * xi;
        }
        let mut z = vec![R::zero(); self.context_dim];
        z[0] = R::of(phase.sin());
        z[1] = R::of(1.0 + 0.1 * shock);
        ContextVector(z)
    }
}

/// Latent noise-free cohort response.
///
/// Score: `s_k · (1 − exp(−r_k·⟨u_k, θ⟩)) · (1 + ⟨cs_k, z − z̄⟩)` where z̄ is
/// the baseline context. Impressions: `m_k · ⟨v_k, θ⟩ · z[1]`.
pub fn true_response<R: Real>(
    cohort: &CohortSpec<R>,
    theta: &PolicyVector<R>,
    z: &ContextVector<R>,
) -> ObjectivePair<R> {
    let baseline = ContextVector::baseline(z.dim());
    let centered: Vec<R> = z
        .as_slice()
        .iter()
        .zip(baseline.as_slice())
        .map(|(zi, bi)| *zi - *bi)
        .collect();
    let context_factor = R::one() + dot(&cohort.context_sensitivity, &centered);
    let score_mass = dot(&cohort.score_direction, theta.as_slice());
    let score = cohort.saturation * (R::one() - (-cohort.rate * score_mass).exp()) * context_factor;
    let impression_mass = dot(&cohort.impression_direction, theta.as_slice());
    let impressions = cohort.impression_gain * impression_mass * z.as_slice()[1];
    ObjectivePair::new(score, impressions)
}

/// Executes one decision per cohort and reports noisy outcomes plus the
/// constraint values `g_i = observed impressions delta − budget_i`
/// (`g ≤ 0` feasible).
///
/// Noise streams are derived per `(seed, step, cohort)`, so cohorts may be
/// observed in any order without changing the draw.
pub fn observe<R: Real>(
    env: &Environment<R>,
    decisions: &[PolicyVector<R>],
    z: &ContextVector<R>,
    master_seed: u64,
    step: u64,
) -> Result<(Vec<ObjectivePair<R>>, ConstraintReport<R>), SimError> {
    if decisions.len() != env.cohort_count() {
        return Err(SimError::DecisionCount {
            expected: env.cohort_count(),
            got: decisions.len(),
        });
    }
    let mut pairs = Vec::with_capacity(decisions.len());
    let mut per_cohort = Vec::with_capacity(decisions.len());
    for (cohort, theta) in env.cohorts.iter().zip(decisions) {
        if theta.dim() != env.policy_dim {
            return Err(SimError::PolicyDim {
                expected: env.policy_dim,
                got: theta.dim(),
            });
        }
        let latent = true_response(cohort, theta, z);
        let mut rng = derive_rng(master_seed, StreamPurpose::Noise, step, cohort.id as u64);
        let noise_score: f64 =
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
        let noise_impr: f64 =
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
        let observed = ObjectivePair::new(
            latent.score_delta + cohort.noise_sd_score * R::of(noise_score),
            latent.impressions_delta + cohort.noise_sd_impressions * R::of(noise_impr),
        );
        per_cohort.push(
            env.impression_budgets
                .iter()
                .map(|b| observed.impressions_delta - *b)
                .collect::<Vec<R>>(),
        );
        pairs.push(observed);
    }
    let report = ConstraintReport::new(per_cohort, env.volume_weights())?;
    Ok((pairs, report))
}

/// Volume-weighted platform aggregate of per-cohort outcomes.
pub fn aggregate<R: Real>(
    per_cohort: &[ObjectivePair<R>],
    weights: &[R],
) -> Result<ObjectivePair<R>, SimError> {
    if per_cohort.len() != weights.len() {
        return Err(SimError::AggregationMismatch {
            weights: weights.len(),
            pairs: per_cohort.len(),
        });
    }
    let mut score = R::zero();
    let mut impressions = R::zero();
    for (pair, w) in per_cohort.iter().zip(weights) {
        score += *w * pair.score_delta;
        impressions += *w * pair.impressions_delta;
    }
    Ok(ObjectivePair::new(score, impressions))
}

/// The canonical three-cohort benchmark environment.
pub fn benchmark_env_3cohort() -> Environment<f64> {
    let config: ExperimentConfig<f64> = ExperimentConfig::benchmark_3cohort();
    Environment::from_config(
        &config.environment,
        config.experiment.policy_dim,
        config.experiment.impression_budgets.clone(),
    )
}

/// One lattice point of the feasibility scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub theta: Vec<f64>,
    pub platform_score: f64,
    pub platform_impressions: f64,
}

/// Result of the exhaustive ground-truth lattice scan certifying that the
/// benchmark target is reachable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCertificate {
    /// Lattice resolution per policy dimension.
    pub grid_per_dim: usize,
    /// Score threshold the margin is measured against.
    pub score_target: f64,
    /// Impression budget the feasibility check uses.
    pub impression_budget: f64,
    /// Number of lattice points meeting the budget.
    pub feasible_points: usize,
    /// Feasible point with the highest platform score, if any.
    pub best_feasible: Option<ScanPoint>,
    /// Best feasible platform score minus the target (negative if the
    /// target is unreachable on the lattice).
    pub score_margin: f64,
}

/// Exhaustively scans a `grid_per_dim`-per-axis lattice over the unit policy
/// box at baseline context, noise-free, and reports the best feasible point.
///
/// Cost is `grid_per_dim^policy_dim` evaluations; intended for the 3-d
/// benchmark as a ground-truth certificate, not for general use.
pub fn grid_scan_certificate(
    env: &Environment<f64>,
    score_target: f64,
    grid_per_dim: usize,
) -> ScanCertificate {
    assert!(grid_per_dim >= 2, "lattice needs at least two points per axis");
    let d = env.policy_dim;
    let z = ContextVector::baseline(env.context_dim);
    let weights = env.volume_weights();
    let budget = env.impression_budgets[0];
    let mut best: Option<ScanPoint> = None;
    let mut feasible_points = 0usize;
    let mut index = vec![0usize; d];
    loop {
        let theta = PolicyVector(
            index
                .iter()
                .map(|&i| i as f64 / (grid_per_dim - 1) as f64)
                .collect::<Vec<f64>>(),
        );
        let pairs: Vec<ObjectivePair<f64>> = env
            .cohorts
            .iter()
            .map(|c| true_response(c, &theta, &z))
            .collect();
        let platform = aggregate(&pairs, &weights).expect("weights match cohort count");
        if platform.impressions_delta <= budget {
            feasible_points += 1;
            let better = best
                .as_ref()
                .is_none_or(|b| platform.score_delta > b.platform_score);
            if better {
                best = Some(ScanPoint {
                    theta: theta.0.clone(),
                    platform_score: platform.score_delta,
                    platform_impressions: platform.impressions_delta,
                });
            }
        }
        // Odometer increment over the lattice.
        let mut dim = 0;
        loop {
            if dim == d {
                let score_margin = best
                    .as_ref()
                    .map_or(f64::NEG_INFINITY, |b| b.platform_score - score_target);
                return ScanCertificate {
                    grid_per_dim,
                    score_target,
                    impression_budget: budget,
                    feasible_points,
                    best_feasible: best,
                    score_margin,
                };
            }
            index[dim] += 1;
            if index[dim] < grid_per_dim {
                break;
            }
            index[dim] = 0;
            dim += 1;
        }
    }
}
