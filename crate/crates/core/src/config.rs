//! Experiment configuration: one TOML file describes the environment, the
//! optimizer, the trust-region mechanics, and the run bookkeeping.
//!
//! The canonical three-cohort benchmark ships embedded in the library (and
//! as `configs/benchmark_3cohort.toml` in the repository) so that every
//! consumer — unit tests, the acceptance suite, the CLI — runs against
//! byte-identical parameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::KernelSpec;
use crate::real::Real;

/// Canonical three-cohort benchmark configuration, embedded verbatim from
/// the versioned file in `configs/`.
pub const BENCHMARK_3COHORT_TOML: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../configs/benchmark_3cohort.toml"
));

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Run-level experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection<R> {
    /// Number of constraints N (must match `impression_budgets`).
    pub constraint_count: usize,
    /// Horizon T in steps (one step ≈ one day).
    pub horizon: usize,
    /// Dimension of the policy vector θ.
    pub policy_dim: usize,
    /// Platform score-delta threshold (percent) for convergence.
    pub score_target: R,
    /// Per-constraint impression-delta budgets (percent).
    pub impression_budgets: Vec<R>,
    /// Consecutive steps W that must meet the target to declare convergence.
    pub convergence_window: usize,
    /// Default replication seeds (the CLI may override).
    pub seeds: Vec<u64>,
    /// Stop the run at the convergence step instead of running to T.
    #[serde(default)]
    pub stop_at_convergence: bool,
}

/// Global policy-space box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSection<R> {
    pub lower: Vec<R>,
    pub upper: Vec<R>,
}

/// Optimizer and surrogate settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: crate::real::Real")]
pub struct OptimizerSection<R> {
    /// Candidates enumerated per cohort per step.
    #[serde(default = "default_n_candidates")]
    pub n_candidates: usize,
    /// Optimism weight β in the acquisition plug-in.
    #[serde(default = "default_beta")]
    pub beta: R,
    /// Dual slackness ε (percent units).
    #[serde(default = "default_epsilon")]
    pub epsilon: R,
    /// Acquisition penalty weight η.
    #[serde(default = "default_eta")]
    pub eta: R,
    /// Kernel candidates for marginal-likelihood selection.
    pub kernel_grid: Vec<KernelSpec<R>>,
    /// Observation-noise variance candidates.
    pub noise_grid: Vec<R>,
    /// Re-run hyperparameter selection every this many steps.
    #[serde(default = "default_refresh_every")]
    pub hyperparam_refresh_every: usize,
    /// Cap on training points used during hyperparameter selection (most
    /// recent observations win).
    #[serde(default = "default_selection_max_points")]
    pub hyperparam_selection_max_points: usize,
    /// Cap on training points per surrogate fit (most recent observations
    /// win). Bounds per-step cost on long runs; set it at least a few times
    /// the policy dimension.
    #[serde(default = "default_fit_max_points")]
    pub fit_max_points: usize,
}

fn default_n_candidates() -> usize {
    256
}
fn default_beta<R: Real>() -> R {
    R::one()
}
fn default_epsilon<R: Real>() -> R {
    R::of(0.05)
}
fn default_eta<R: Real>() -> R {
    R::one()
}
fn default_refresh_every() -> usize {
    10
}
fn default_selection_max_points() -> usize {
    120
}
fn default_fit_max_points() -> usize {
    200
}

/// Trust-region automaton settings (normalized [0,1] edge-length units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: crate::real::Real")]
pub struct TrustRegionSection<R> {
    #[serde(default = "default_length_init")]
    pub length_init: R,
    #[serde(default = "default_length_min")]
    pub length_min: R,
    #[serde(default = "default_length_max")]
    pub length_max: R,
    #[serde(default = "default_tau_succ")]
    pub tau_succ: u32,
    #[serde(default = "default_tau_fail")]
    pub tau_fail: u32,
}

fn default_length_init<R: Real>() -> R {
    R::of(0.4)
}
fn default_length_min<R: Real>() -> R {
    R::of(0.05)
}
fn default_length_max<R: Real>() -> R {
    R::one()
}
fn default_tau_succ() -> u32 {
    3
}
fn default_tau_fail() -> u32 {
    5
}

impl<R: Real> Default for TrustRegionSection<R> {
    fn default() -> Self {
        Self {
            length_init: default_length_init(),
            length_min: default_length_min(),
            length_max: default_length_max(),
            tau_succ: default_tau_succ(),
            tau_fail: default_tau_fail(),
        }
    }
}

/// Ground-truth environment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSection<R> {
    /// AR(1) coefficient of the traffic shock.
    pub ar_rho: R,
    /// AR(1) innovation standard deviation.
    pub ar_sigma: R,
    /// Context dimension (index 0 = seasonality, index 1 = traffic).
    pub context_dim: usize,
    pub cohorts: Vec<CohortSection<R>>,
}

/// One cohort's ground-truth response parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSection<R> {
    pub id: usize,
    /// Impression-volume fraction w_k; must sum to 1 across cohorts.
    pub volume_weight: R,
    /// Score saturation s_k: asymptotic score delta in percent.
    pub saturation: R,
    /// Response curvature r_k > 0.
    pub rate: R,
    /// Impressions percent per unit of projected policy mass.
    pub impression_gain: R,
    /// Observation noise (percent) on the score metric.
    pub noise_sd_score: R,
    /// Observation noise (percent) on the impressions metric.
    pub noise_sd_impressions: R,
    /// Coupling of (context − baseline context) into the score response.
    pub context_sensitivity: Vec<R>,
    /// Score response direction u_k (normalized on load).
    pub score_direction: Vec<R>,
    /// Impressions response direction v_k (normalized on load).
    pub impression_direction: Vec<R>,
}

/// The full parsed experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: crate::real::Real")]
pub struct ExperimentConfig<R> {
    pub experiment: ExperimentSection<R>,
    pub bounds: BoundsSection<R>,
    pub optimizer: OptimizerSection<R>,
    #[serde(default)]
    pub trust_region: TrustRegionSection<R>,
    pub environment: EnvironmentSection<R>,
}

impl<R: Real> ExperimentConfig<R> {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The canonical three-cohort benchmark.
    pub fn benchmark_3cohort() -> Self {
        Self::from_toml_str(BENCHMARK_3COHORT_TOML)
            .expect("embedded benchmark config must be valid")
    }

    /// Cohort count K.
    pub fn cohort_count(&self) -> usize {
        self.environment.cohorts.len()
    }

    /// The policy search box as a bounds object the optimizer can work with.
    pub fn global_bounds(&self) -> crate::trust_region::GlobalBounds<R> {
        crate::trust_region::GlobalBounds {
            lower: self.bounds.lower.clone(),
            upper: self.bounds.upper.clone(),
        }
    }

    /// The trust-region automaton parameters.
    pub fn trust_region_params(&self) -> crate::trust_region::TrustRegionParams<R> {
        crate::trust_region::TrustRegionParams {
            length_init: self.trust_region.length_init,
            length_min: self.trust_region.length_min,
            length_max: self.trust_region.length_max,
            tau_succ: self.trust_region.tau_succ,
            tau_fail: self.trust_region.tau_fail,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        let e = &self.experiment;
        if e.horizon < e.convergence_window || e.convergence_window < 1 {
            return invalid(format!(
                "horizon ({}) must be >= convergence_window ({}) >= 1",
                e.horizon, e.convergence_window
            ));
        }
        if e.constraint_count < 1 || e.impression_budgets.len() != e.constraint_count {
            return invalid(format!(
                "constraint_count ({}) must be >= 1 and match impression_budgets (len {})",
                e.constraint_count,
                e.impression_budgets.len()
            ));
        }
        if e.policy_dim == 0 {
            return invalid("policy_dim must be >= 1".into());
        }
        if e.seeds.is_empty() {
            return invalid("at least one seed is required".into());
        }
        if self.bounds.lower.len() != e.policy_dim || self.bounds.upper.len() != e.policy_dim {
            return invalid(format!(
                "bounds must have policy_dim ({}) entries",
                e.policy_dim
            ));
        }
        for (lo, hi) in self.bounds.lower.iter().zip(&self.bounds.upper) {
            // Negated on purpose so NaN bounds fail validation too.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(lo < hi) {
                return invalid(format!(
                    "bounds require lower < upper componentwise (got {lo} vs {hi})"
                ));
            }
        }
        let o = &self.optimizer;
        if o.n_candidates < 1 {
            return invalid("n_candidates must be >= 1".into());
        }
        if o.kernel_grid.is_empty() || o.noise_grid.is_empty() {
            return invalid("kernel_grid and noise_grid must be non-empty".into());
        }
        for k in &o.kernel_grid {
            k.validate(e.policy_dim + self.environment.context_dim)
                .map_err(|err| ConfigError::Invalid(format!("kernel grid entry: {err}")))?;
        }
        for n in &o.noise_grid {
            if *n < R::zero() || !n.is_finite() {
                return invalid("noise grid entries must be finite and >= 0".into());
            }
        }
        if o.hyperparam_refresh_every == 0 || o.hyperparam_selection_max_points == 0 {
            return invalid("hyperparameter refresh settings must be >= 1".into());
        }
        if o.fit_max_points < 2 {
            return invalid("fit_max_points must be >= 2".into());
        }
        let tr = &self.trust_region;
        if !(R::zero() < tr.length_min
            && tr.length_min <= tr.length_init
            && tr.length_init <= tr.length_max)
        {
            return invalid(format!(
                "trust-region lengths must satisfy 0 < min ({}) <= init ({}) <= max ({})",
                tr.length_min, tr.length_init, tr.length_max
            ));
        }
        if tr.tau_succ == 0 || tr.tau_fail == 0 {
            return invalid("trust-region streak thresholds must be >= 1".into());
        }
        let env = &self.environment;
        if env.cohorts.is_empty() {
            return invalid("at least one cohort is required".into());
        }
        if env.context_dim < 2 {
            return invalid("context_dim must be >= 2 (seasonality + traffic)".into());
        }
        if !(R::zero() <= env.ar_rho && env.ar_rho < R::one()) {
            return invalid(format!("ar_rho must be in [0, 1), got {}", env.ar_rho));
        }
        if env.ar_sigma < R::zero() {
            return invalid("ar_sigma must be >= 0".into());
        }
        let mut weight_sum = R::zero();
        for c in &env.cohorts {
            if c.rate <= R::zero() {
                return invalid(format!("cohort {} rate must be > 0", c.id));
            }
            if c.volume_weight < R::zero() || c.volume_weight > R::one() {
                return invalid(format!("cohort {} volume_weight outside [0,1]", c.id));
            }
            if c.noise_sd_score < R::zero() || c.noise_sd_impressions < R::zero() {
                return invalid(format!("cohort {} noise_sd must be >= 0", c.id));
            }
            if c.score_direction.len() != e.policy_dim
                || c.impression_direction.len() != e.policy_dim
            {
                return invalid(format!(
                    "cohort {} direction vectors must have policy_dim ({}) entries",
                    c.id, e.policy_dim
                ));
            }
            if c.context_sensitivity.len() != env.context_dim {
                return invalid(format!(
                    "cohort {} context_sensitivity must have context_dim ({}) entries",
                    c.id, env.context_dim
                ));
            }
            weight_sum += c.volume_weight;
        }
        if (weight_sum.to_f64_lossy() - 1.0).abs() > crate::dual::WEIGHT_SUM_TOLERANCE {
            return invalid(format!(
                "cohort volume weights sum to {weight_sum}, must be 1"
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_config_parses_and_validates() {
        let config: ExperimentConfig<f64> = ExperimentConfig::benchmark_3cohort();
        assert_eq!(config.cohort_count(), 3);
        assert_eq!(config.experiment.constraint_count, 1);
        assert_eq!(config.experiment.policy_dim, 3);
        assert!(config.experiment.seeds.len() >= 20);
    }

    #[test]
    fn bad_weight_sum_rejected() {
        let mut config: ExperimentConfig<f64> = ExperimentConfig::benchmark_3cohort();
        config.environment.cohorts[0].volume_weight = 0.9;
        assert!(matches!(config.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn window_longer_than_horizon_rejected() {
        let mut config: ExperimentConfig<f64> = ExperimentConfig::benchmark_3cohort();
        config.experiment.convergence_window = config.experiment.horizon + 1;
        assert!(config.validate().is_err());
    }

    #[test]
    fn inverted_bounds_rejected() {
        let mut config: ExperimentConfig<f64> = ExperimentConfig::benchmark_3cohort();
        config.bounds.upper[0] = config.bounds.lower[0];
        assert!(config.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config: ExperimentConfig<f64> = ExperimentConfig::benchmark_3cohort();
        let text = toml::to_string(&config).unwrap();
        let back: ExperimentConfig<f64> = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(config, back);
    }
}
