//! The sequential decision loop: per-cohort trust-region Bayesian
//! optimization with primal-dual constraint handling, plus the pooled-GP and
//! random baselines it is compared against.
//!
//! One step of the full method does, in order:
//!
//! 1. choose a policy per cohort — either a cold-start probe or the
//!    acquisition argmax over candidates drawn inside that cohort's trust
//!    region (baselines sample the full box instead);
//! 2. execute all policies through an observation callback and receive noisy
//!    objective pairs plus per-cohort constraint values;
//! 3. ascend the dual multipliers on the observed volume-weighted violations;
//! 4. update each cohort's trust region from a success flag (hypervolume
//!    gain or violation decrease) and recenter it on the incumbent when the
//!    incumbent improves or the region restarts.
//!
//! The loop itself never touches the simulator directly: observations come
//! from a callback, so tests can drive it with hand-built responses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::pareto::{hvi, ObjectivePair, ParetoFront};
use crate::acquisition::{generate_candidates, select_policy};
use crate::config::ExperimentConfig;
use crate::dual::{
    dual_update, time_average_violation, weighted_violation, ConstraintReport, DualError,
    DualState,
};
use crate::gp::kernel::KernelSpec;
use crate::gp::{select_hyperparameters, GpError, GpModel};
use crate::real::Real;
use crate::rng::{derive_rng, StreamPurpose};
use crate::sim::{aggregate, ContextVector, Environment, PolicyVector, SimError};
use crate::trust_region::{GlobalBounds, TrustRegion, TrustRegionError};

/// Which policy-selection strategy a run uses. All three share the
/// observation, dual, convergence, and logging machinery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Per-cohort GPs, per-cohort trust regions (the full method).
    Ctrcbo,
    /// One pooled GP per objective over all cohorts (cohort id one-hot
    /// encoded), candidates drawn from the full policy box.
    NaiveCbo,
    /// Uniform random policies; no surrogate at all.
    RandomBaseline,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [
        Algorithm::Ctrcbo,
        Algorithm::NaiveCbo,
        Algorithm::RandomBaseline,
    ];

    /// Stable short name used in CLI flags and output files.
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ctrcbo => "ctrcbo",
            Algorithm::NaiveCbo => "cbo",
            Algorithm::RandomBaseline => "random",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ctrcbo" => Ok(Algorithm::Ctrcbo),
            "cbo" => Ok(Algorithm::NaiveCbo),
            "random" => Ok(Algorithm::RandomBaseline),
            other => Err(format!(
                "unknown algorithm '{other}' (expected ctrcbo, cbo, or random)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error(transparent)]
    TrustRegion(#[from] TrustRegionError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("environment disagrees with config: {0}")]
    Mismatch(String),
    #[error("held-out evaluation needs fit window below the executed horizon ({executed} steps, fit window {t0})")]
    ProxyWindow { executed: usize, t0: usize },
}

/// One executed cohort decision and everything observed for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord<R> {
    /// 1-based step index.
    pub step: usize,
    pub theta: PolicyVector<R>,
    pub context: ContextVector<R>,
    pub observed: ObjectivePair<R>,
    /// Per-constraint values for this cohort (impressions delta minus
    /// budget; non-positive means feasible).
    pub constraint_values: Vec<R>,
    /// True when surrogate fitting failed and the region center was executed
    /// as a fallback.
    pub fallback: bool,
}

/// Everything a run writes down, step by step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationLog<R> {
    /// `per_cohort[k]` holds cohort k's records in execution order; its
    /// length always equals the number of executed steps.
    pub per_cohort: Vec<Vec<CohortRecord<R>>>,
    /// Multipliers after each step's dual ascent: `dual_trajectory[t-1][i]`.
    pub dual_trajectory: Vec<Vec<R>>,
    /// Trust-region edge lengths at selection time: `region_lengths[t-1][k]`.
    pub region_lengths: Vec<Vec<R>>,
    /// Observed volume-weighted constraint violations per step.
    pub weighted_violations: Vec<Vec<R>>,
}

impl<R> ObservationLog<R> {
    fn new(cohorts: usize) -> Self {
        Self {
            per_cohort: (0..cohorts).map(|_| Vec::new()).collect(),
            dual_trajectory: Vec::new(),
            region_lengths: Vec::new(),
            weighted_violations: Vec::new(),
        }
    }
}

/// Platform-level view of one step, shaped for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics<R> {
    /// 1-based step index.
    pub step: usize,
    pub per_cohort: Vec<ObjectivePair<R>>,
    /// Volume-weighted platform aggregate of `per_cohort`.
    pub platform: ObjectivePair<R>,
    /// Observed volume-weighted violation per constraint (non-positive means
    /// the step was feasible).
    pub weighted_violation: Vec<R>,
    /// Multipliers after this step's dual ascent.
    pub lambda: Vec<R>,
    /// Per-cohort region edge lengths at selection time.
    pub region_lengths: Vec<R>,
    /// True once convergence has been declared at or before this step.
    pub converged_flag: bool,
}

/// Outcome of one `(algorithm, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult<R> {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub converged: bool,
    /// First step at which the convergence window closed, if any.
    pub steps_to_convergence: Option<usize>,
    /// Time-averaged weighted violation per constraint over the whole run.
    pub final_time_average_violation: Vec<R>,
    /// Cumulative best-feasible-gap proxy at the end of the run: each step
    /// adds how far the observed platform score fell short of the best
    /// feasible platform score seen so far.
    pub regret_proxy: R,
    /// `(horizon, cumulative proxy / horizon)` at T/8, T/4, T/2, and T.
    pub average_regret_at: Vec<(usize, R)>,
    pub steps: Vec<StepMetrics<R>>,
    pub log: ObservationLog<R>,
}

/// Hyperparameters chosen for the two surrogates of one model group.
#[derive(Debug, Clone)]
struct ModelHyper<R> {
    kernel_score: KernelSpec<R>,
    noise_score: R,
    kernel_impressions: KernelSpec<R>,
    noise_impressions: R,
}

/// Best executed policy of one cohort: lowest total violation first,
/// highest observed score among equals.
#[derive(Debug, Clone)]
struct Incumbent<R> {
    theta: PolicyVector<R>,
    score: R,
    violation: R,
}

fn incumbent_improves<R: Real>(current: Option<&Incumbent<R>>, violation: R, score: R) -> bool {
    match current {
        None => true,
        Some(old) => {
            violation < old.violation || (violation == old.violation && score > old.score)
        }
    }
}

#[derive(Debug, Clone)]
struct CohortState<R: Real> {
    region: TrustRegion<R>,
    hyper: Option<ModelHyper<R>>,
    steps_since_selection: usize,
    incumbent: Option<Incumbent<R>>,
    prev_violation: Option<R>,
}

/// Number of forced exploration steps before the surrogates take over.
pub fn cold_start_steps(policy_dim: usize) -> usize {
    policy_dim.max(2)
}

fn input_row<R: Real>(theta: &PolicyVector<R>, z: &ContextVector<R>, extra: &[R]) -> Vec<R> {
    let mut row = Vec::with_capacity(theta.dim() + z.dim() + extra.len());
    row.extend_from_slice(theta.as_slice());
    row.extend_from_slice(z.as_slice());
    row.extend_from_slice(extra);
    row
}

fn one_hot<R: Real>(index: usize, len: usize) -> Vec<R> {
    let mut v = vec![R::zero(); len];
    v[index] = R::one();
    v
}

fn mean<R: Real>(xs: &[R]) -> R {
    if xs.is_empty() {
        R::zero()
    } else {
        xs.iter().fold(R::zero(), |a, b| a + *b) / R::of(xs.len() as f64)
    }
}

/// Reference point for a cohort's front: the pointwise minimum of the
/// observed (score, headroom) cloud, pushed further down-left by a tenth of
/// each coordinate's span (plus a floor so a degenerate cloud still sits
/// strictly above it).
fn front_ref_point<R: Real>(points: &[ObjectivePair<R>]) -> ObjectivePair<R> {
    let mut min_s = R::zero();
    let mut max_s = R::zero();
    let mut min_h = R::zero();
    let mut max_h = R::zero();
    for (i, p) in points.iter().enumerate() {
        if i == 0 {
            min_s = p.score_delta;
            max_s = p.score_delta;
            min_h = p.impressions_delta;
            max_h = p.impressions_delta;
        } else {
            min_s = min_s.min(p.score_delta);
            max_s = max_s.max(p.score_delta);
            min_h = min_h.min(p.impressions_delta);
            max_h = max_h.max(p.impressions_delta);
        }
    }
    let pad = R::of(0.1);
    let floor = R::of(1e-3);
    ObjectivePair::new(
        min_s - pad * (max_s - min_s) - floor,
        min_h - pad * (max_h - min_h) - floor,
    )
}

/// Front over everything a cohort has observed so far, in (score, headroom
/// against the first budget) coordinates.
fn cohort_front<R: Real>(records: &[CohortRecord<R>], budget: R) -> ParetoFront<R> {
    let points: Vec<ObjectivePair<R>> = records
        .iter()
        .map(|r| r.observed.with_headroom(budget))
        .collect();
    ParetoFront::new(&points, front_ref_point(&points))
}

/// The live state of one run. Steps are driven one at a time through
/// [`OptimizerState::step`]; [`run`] wires it to a simulated environment.
#[derive(Debug, Clone)]
pub struct OptimizerState<R: Real> {
    algorithm: Algorithm,
    config: ExperimentConfig<R>,
    bounds: GlobalBounds<R>,
    seed: u64,
    duals: DualState<R>,
    cohorts: Vec<CohortState<R>>,
    pooled_hyper: Option<ModelHyper<R>>,
    pooled_steps_since_selection: usize,
    executed: usize,
    converged_at: Option<usize>,
    good_history: Vec<bool>,
    best_feasible_score: Option<R>,
    cumulative_regret: R,
    regret_history: Vec<R>,
    steps: Vec<StepMetrics<R>>,
    log: ObservationLog<R>,
}

impl<R: Real> OptimizerState<R> {
    pub fn new(
        algorithm: Algorithm,
        config: &ExperimentConfig<R>,
        seed: u64,
    ) -> Result<Self, OptimizerError> {
        let bounds = config.global_bounds();
        let n_constraints = config.experiment.impression_budgets.len();
        let cohort_count = config.cohort_count();
        let params = config.trust_region_params();
        let mut cohorts = Vec::with_capacity(cohort_count);
        for k in 0..cohort_count {
            let region = match algorithm {
                // The full method starts a fresh region at the box midpoint.
                Algorithm::Ctrcbo => TrustRegion::new(k, bounds.midpoint(), params, &bounds)?,
                // Baselines keep a static region covering the box, so the
                // same candidate machinery samples the full space.
                Algorithm::NaiveCbo | Algorithm::RandomBaseline => TrustRegion::spanning(k, &bounds),
            };
            cohorts.push(CohortState {
                region,
                hyper: None,
                steps_since_selection: 0,
                incumbent: None,
                prev_violation: None,
            });
        }
        Ok(Self {
            algorithm,
            config: config.clone(),
            bounds,
            seed,
            duals: DualState::new(n_constraints, config.optimizer.epsilon, config.optimizer.eta),
            cohorts,
            pooled_hyper: None,
            pooled_steps_since_selection: 0,
            executed: 0,
            converged_at: None,
            good_history: Vec::new(),
            best_feasible_score: None,
            cumulative_regret: R::zero(),
            regret_history: Vec::new(),
            steps: Vec::new(),
            log: ObservationLog::new(cohort_count),
        })
    }

    pub fn completed_steps(&self) -> usize {
        self.executed
    }

    pub fn converged_at(&self) -> Option<usize> {
        self.converged_at
    }

    /// Executes one step: select a policy per cohort, observe through the
    /// callback, ascend the duals, and update regions and metrics.
    pub fn step<F>(&mut self, z: &ContextVector<R>, mut observe_fn: F) -> Result<(), OptimizerError>
    where
        F: FnMut(
            &[PolicyVector<R>],
            &ContextVector<R>,
        ) -> Result<(Vec<ObjectivePair<R>>, ConstraintReport<R>), SimError>,
    {
        let t = self.executed + 1;
        let cohort_count = self.cohorts.len();
        let dim = self.config.experiment.policy_dim;
        let cold_n = cold_start_steps(dim);
        let budgets = self.config.experiment.impression_budgets.clone();
        let selection_lengths: Vec<R> = self.cohorts.iter().map(|c| c.region.length).collect();

        // --- 1. choose a policy per cohort -------------------------------
        let mut decisions: Vec<PolicyVector<R>> = Vec::with_capacity(cohort_count);
        let mut fallback = vec![false; cohort_count];

        if self.algorithm == Algorithm::RandomBaseline {
            for k in 0..cohort_count {
                let mut rng =
                    derive_rng(self.seed, StreamPurpose::Candidates, t as u64, k as u64);
                let theta = PolicyVector(
                    (0..dim)
                        .map(|d| {
                            let u: f64 = rand::Rng::gen_range(&mut rng, 0.0..1.0);
                            self.bounds.lower[d]
                                + (self.bounds.upper[d] - self.bounds.lower[d]) * R::of(u)
                        })
                        .collect(),
                );
                decisions.push(theta);
            }
        } else if t <= cold_n {
            // Cold start: replay a fixed space-filling probe list per cohort
            // (entry 0 is the region center) and execute entry t-1.
            for k in 0..cohort_count {
                let region_box = self.cohorts[k].region.region_bounds(&self.bounds);
                let mut rng = derive_rng(self.seed, StreamPurpose::ColdStart, 0, k as u64);
                let probes = generate_candidates(&region_box, cold_n, &mut rng);
                decisions.push(probes[t - 1].clone());
            }
        } else {
            match self.algorithm {
                Algorithm::Ctrcbo => {
                    // Index loops on purpose here and below: `k` drives
                    // several parallel per-cohort structures at once.
                    #[allow(clippy::needless_range_loop)]
                    for k in 0..cohort_count {
                        let choice = Self::select_ctrcbo(
                            &mut self.cohorts[k],
                            &self.log.per_cohort[k],
                            &self.config,
                            &self.bounds,
                            &self.duals,
                            z,
                            self.seed,
                            t,
                            k,
                        );
                        match choice {
                            Ok(theta) => decisions.push(theta),
                            Err(_) => {
                                fallback[k] = true;
                                decisions.push(
                                    self.cohorts[k].region.region_bounds(&self.bounds).center(),
                                );
                            }
                        }
                    }
                }
                Algorithm::NaiveCbo => {
                    let pooled = Self::fit_pooled(
                        &mut self.pooled_hyper,
                        &mut self.pooled_steps_since_selection,
                        &self.log.per_cohort,
                        &self.config,
                    );
                    match pooled {
                        Ok((f_gp, c_gp)) => {
                            let c_gps = vec![c_gp; budgets.len()];
                            #[allow(clippy::needless_range_loop)]
                            for k in 0..cohort_count {
                                let mut rng = derive_rng(
                                    self.seed,
                                    StreamPurpose::Candidates,
                                    t as u64,
                                    k as u64,
                                );
                                let extra = one_hot::<R>(k, cohort_count);
                                let front = cohort_front(&self.log.per_cohort[k], budgets[0]);
                                let choice = select_policy(
                                    &self.cohorts[k].region,
                                    &self.bounds,
                                    z,
                                    &extra,
                                    &f_gp,
                                    &c_gps,
                                    &self.duals,
                                    &front,
                                    &budgets,
                                    self.config.optimizer.n_candidates,
                                    self.config.optimizer.beta,
                                    &mut rng,
                                );
                                match choice {
                                    Ok(theta) => decisions.push(theta),
                                    Err(_) => {
                                        fallback[k] = true;
                                        decisions.push(
                                            self.cohorts[k]
                                                .region
                                                .region_bounds(&self.bounds)
                                                .center(),
                                        );
                                    }
                                }
                            }
                        }
                        Err(_) => {
                            #[allow(clippy::needless_range_loop)]
                            for k in 0..cohort_count {
                                fallback[k] = true;
                                decisions.push(
                                    self.cohorts[k].region.region_bounds(&self.bounds).center(),
                                );
                            }
                        }
                    }
                }
                Algorithm::RandomBaseline => unreachable!("handled above"),
            }
        }

        for (k, theta) in decisions.iter().enumerate() {
            let region_box = self.cohorts[k].region.region_bounds(&self.bounds);
            assert!(
                region_box.contains(theta),
                "selected policy left its region (cohort {k}, step {t})"
            );
        }

        // --- 2. execute and observe --------------------------------------
        let (pairs, report) = observe_fn(&decisions, z)?;
        if pairs.len() != cohort_count || report.per_cohort.len() != cohort_count {
            return Err(OptimizerError::Mismatch(format!(
                "observation returned {} cohorts, expected {cohort_count}",
                pairs.len()
            )));
        }
        let weighted = weighted_violation(&report)?;
        let platform = aggregate(&pairs, &report.weights)?;

        // --- 3. dual ascent on observed violations ------------------------
        self.duals = dual_update(&self.duals, &weighted);

        // --- 4. per-cohort bookkeeping ------------------------------------
        for k in 0..cohort_count {
            self.log.per_cohort[k].push(CohortRecord {
                step: t,
                theta: decisions[k].clone(),
                context: z.clone(),
                observed: pairs[k],
                constraint_values: report.per_cohort[k].clone(),
                fallback: fallback[k],
            });

            let violation_k = report.per_cohort[k]
                .iter()
                .fold(R::zero(), |a, g| a + g.max(R::zero()));
            let improved = incumbent_improves(
                self.cohorts[k].incumbent.as_ref(),
                violation_k,
                pairs[k].score_delta,
            );
            if improved {
                self.cohorts[k].incumbent = Some(Incumbent {
                    theta: decisions[k].clone(),
                    score: pairs[k].score_delta,
                    violation: violation_k,
                });
            }

            if self.algorithm == Algorithm::Ctrcbo {
                let records = &self.log.per_cohort[k];
                let points: Vec<ObjectivePair<R>> = records
                    .iter()
                    .map(|r| r.observed.with_headroom(budgets[0]))
                    .collect();
                // Front state before this step's point, measured against the
                // same reference point the updated front will use.
                let ref_point = front_ref_point(&points);
                let previous_front = ParetoFront::new(&points[..points.len() - 1], ref_point);
                let gain = hvi(points.last().expect("just pushed"), &previous_front);
                let shrank_violation = self.cohorts[k]
                    .prev_violation
                    .is_some_and(|prev| violation_k < prev);
                let success =
                    !fallback[k] && (gain > R::of(1e-12) || shrank_violation);

                let before_restarts = self.cohorts[k].region.restart_count;
                let mut region = self.cohorts[k].region.clone().update_on_outcome(success);
                let restarted = region.restart_count > before_restarts;
                if restarted || improved {
                    if let Some(inc) = &self.cohorts[k].incumbent {
                        region = region.recenter(inc.theta.clone(), &self.bounds)?;
                    }
                }
                self.cohorts[k].region = region;
            }
            self.cohorts[k].prev_violation = Some(violation_k);
        }

        // --- 5. step-level metrics ----------------------------------------
        self.log.dual_trajectory.push(self.duals.lambda.clone());
        self.log.region_lengths.push(selection_lengths.clone());
        self.log.weighted_violations.push(weighted.clone());

        let target = self.config.experiment.score_target;
        let feasible = weighted.iter().all(|v| *v <= R::zero());
        let good = feasible && platform.score_delta >= target;
        self.good_history.push(good);
        let window = self.config.experiment.convergence_window;
        if self.converged_at.is_none()
            && self.good_history.len() >= window
            && self.good_history[self.good_history.len() - window..]
                .iter()
                .all(|g| *g)
        {
            self.converged_at = Some(t);
        }

        if feasible {
            self.best_feasible_score = Some(match self.best_feasible_score {
                Some(best) => best.max(platform.score_delta),
                None => platform.score_delta,
            });
        }
        if let Some(best) = self.best_feasible_score {
            self.cumulative_regret += (best - platform.score_delta).max(R::zero());
        }
        self.regret_history.push(self.cumulative_regret);

        self.steps.push(StepMetrics {
            step: t,
            per_cohort: pairs,
            platform,
            weighted_violation: weighted,
            lambda: self.duals.lambda.clone(),
            region_lengths: selection_lengths,
            converged_flag: self.converged_at.is_some(),
        });
        self.executed = t;
        Ok(())
    }

    /// Per-cohort selection for the full method: fit score and impression
    /// surrogates on this cohort's in-region history and take the
    /// acquisition argmax inside the trust region.
    #[allow(clippy::too_many_arguments)]
    fn select_ctrcbo(
        cohort: &mut CohortState<R>,
        records: &[CohortRecord<R>],
        config: &ExperimentConfig<R>,
        bounds: &GlobalBounds<R>,
        duals: &DualState<R>,
        z: &ContextVector<R>,
        seed: u64,
        t: usize,
        k: usize,
    ) -> Result<PolicyVector<R>, GpError> {
        let opt = &config.optimizer;
        let dim = config.experiment.policy_dim;
        let budgets = &config.experiment.impression_budgets;
        let region_box = cohort.region.region_bounds(bounds);

        // Fit on the in-region history; fall back to everything while the
        // region holds too few points to support a surrogate.
        let in_region: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| region_box.contains(&r.theta))
            .map(|(i, _)| i)
            .collect();
        let chosen: Vec<usize> = if in_region.len() < 2 * dim {
            (0..records.len()).collect()
        } else {
            in_region
        };
        let recent = chosen.len().saturating_sub(opt.fit_max_points);
        let chosen = &chosen[recent..];
        let inputs: Vec<Vec<R>> = chosen
            .iter()
            .map(|&i| input_row(&records[i].theta, &records[i].context, &[]))
            .collect();
        let scores: Vec<R> = chosen.iter().map(|&i| records[i].observed.score_delta).collect();
        let imprs: Vec<R> = chosen
            .iter()
            .map(|&i| records[i].observed.impressions_delta)
            .collect();

        // Periodic hyperparameter refresh, evaluated on the tail of the same
        // subset the surrogates are fit on. The fit set drifts between
        // refreshes, so a stored kernel can stop factoring; one retry with
        // freshly selected hyperparameters usually recovers, and only a set
        // no grid entry can model becomes a failure outcome.
        cohort.steps_since_selection += 1;
        let mut retried = false;
        let (f_gp, c_gp) = loop {
            if cohort.hyper.is_none()
                || cohort.steps_since_selection >= opt.hyperparam_refresh_every
            {
                let lo = inputs.len().saturating_sub(opt.hyperparam_selection_max_points);
                let (kernel_score, noise_score) = select_hyperparameters(
                    &inputs[lo..],
                    &scores[lo..],
                    &opt.kernel_grid,
                    &opt.noise_grid,
                    mean(&scores[lo..]),
                )?;
                let (kernel_impressions, noise_impressions) = select_hyperparameters(
                    &inputs[lo..],
                    &imprs[lo..],
                    &opt.kernel_grid,
                    &opt.noise_grid,
                    mean(&imprs[lo..]),
                )?;
                cohort.hyper = Some(ModelHyper {
                    kernel_score,
                    noise_score,
                    kernel_impressions,
                    noise_impressions,
                });
                cohort.steps_since_selection = 0;
            }
            let hyper = cohort.hyper.clone().expect("hyperparameters just ensured");
            let fitted = (|| {
                let f_gp = GpModel::fit(
                    &inputs,
                    &scores,
                    hyper.kernel_score.clone(),
                    hyper.noise_score,
                    mean(&scores),
                )?;
                let c_gp = GpModel::fit(
                    &inputs,
                    &imprs,
                    hyper.kernel_impressions.clone(),
                    hyper.noise_impressions,
                    mean(&imprs),
                )?;
                Ok::<_, GpError>((f_gp, c_gp))
            })();
            match fitted {
                Ok(models) => break models,
                Err(e) => {
                    cohort.hyper = None;
                    if retried {
                        return Err(e);
                    }
                    retried = true;
                }
            }
        };
        let c_gps = vec![c_gp; budgets.len()];
        let front = cohort_front(records, budgets[0]);
        let mut rng = derive_rng(seed, StreamPurpose::Candidates, t as u64, k as u64);
        select_policy(
            &cohort.region,
            bounds,
            z,
            &[],
            &f_gp,
            &c_gps,
            duals,
            &front,
            budgets,
            opt.n_candidates,
            opt.beta,
            &mut rng,
        )
    }

    /// Pooled surrogates for the naive baseline: one GP per objective over
    /// all cohorts' records, with the cohort id one-hot encoded.
    fn fit_pooled(
        pooled_hyper: &mut Option<ModelHyper<R>>,
        steps_since_selection: &mut usize,
        per_cohort: &[Vec<CohortRecord<R>>],
        config: &ExperimentConfig<R>,
    ) -> Result<(GpModel<R>, GpModel<R>), GpError> {
        let opt = &config.optimizer;
        let cohort_count = per_cohort.len();
        let longest = per_cohort.iter().map(Vec::len).max().unwrap_or(0);
        // Time-major so a recency cap keeps the newest steps of every cohort.
        let mut inputs: Vec<Vec<R>> = Vec::new();
        let mut scores: Vec<R> = Vec::new();
        let mut imprs: Vec<R> = Vec::new();
        for s in 0..longest {
            for (k, records) in per_cohort.iter().enumerate() {
                if let Some(r) = records.get(s) {
                    inputs.push(input_row(&r.theta, &r.context, &one_hot(k, cohort_count)));
                    scores.push(r.observed.score_delta);
                    imprs.push(r.observed.impressions_delta);
                }
            }
        }

        // Recency cap first, then hyperparameter selection on the tail of
        // the same capped slice the surrogates are fit on.
        let fit_lo = inputs.len().saturating_sub(opt.fit_max_points);
        let (inputs, scores, imprs) = (&inputs[fit_lo..], &scores[fit_lo..], &imprs[fit_lo..]);

        *steps_since_selection += 1;
        let mut retried = false;
        loop {
            if pooled_hyper.is_none() || *steps_since_selection >= opt.hyperparam_refresh_every {
                let lo = inputs.len().saturating_sub(opt.hyperparam_selection_max_points);
                let (kernel_score, noise_score) = select_hyperparameters(
                    &inputs[lo..],
                    &scores[lo..],
                    &opt.kernel_grid,
                    &opt.noise_grid,
                    mean(&scores[lo..]),
                )?;
                let (kernel_impressions, noise_impressions) = select_hyperparameters(
                    &inputs[lo..],
                    &imprs[lo..],
                    &opt.kernel_grid,
                    &opt.noise_grid,
                    mean(&imprs[lo..]),
                )?;
                *pooled_hyper = Some(ModelHyper {
                    kernel_score,
                    noise_score,
                    kernel_impressions,
                    noise_impressions,
                });
                *steps_since_selection = 0;
            }
            let hyper = pooled_hyper.clone().expect("hyperparameters just ensured");
            let fitted = (|| {
                let f_gp = GpModel::fit(
                    inputs,
                    scores,
                    hyper.kernel_score.clone(),
                    hyper.noise_score,
                    mean(scores),
                )?;
                let c_gp = GpModel::fit(
                    inputs,
                    imprs,
                    hyper.kernel_impressions.clone(),
                    hyper.noise_impressions,
                    mean(imprs),
                )?;
                Ok::<_, GpError>((f_gp, c_gp))
            })();
            match fitted {
                Ok(models) => return Ok(models),
                Err(e) => {
                    *pooled_hyper = None;
                    if retried {
                        return Err(e);
                    }
                    retried = true;
                }
            }
        }
    }

    /// Seals the run: convergence verdict, violation averages, and the
    /// regret-proxy schedule.
    pub fn finish(self) -> RunResult<R> {
        let n_constraints = self.duals.n_constraints();
        let final_time_average_violation = if self.log.weighted_violations.is_empty() {
            vec![R::zero(); n_constraints]
        } else {
            time_average_violation(&self.log.weighted_violations)
                .expect("per-step entries share the constraint count")
        };
        let horizon = self.config.experiment.horizon;
        let mut marks: Vec<usize> = [horizon / 8, horizon / 4, horizon / 2, horizon]
            .into_iter()
            .filter(|&h| h >= 1 && h <= self.executed)
            .collect();
        marks.dedup();
        let average_regret_at = marks
            .into_iter()
            .map(|h| (h, self.regret_history[h - 1] / R::of(h as f64)))
            .collect();
        RunResult {
            algorithm: self.algorithm,
            seed: self.seed,
            converged: self.converged_at.is_some(),
            steps_to_convergence: self.converged_at,
            final_time_average_violation,
            regret_proxy: self.cumulative_regret,
            average_regret_at,
            steps: self.steps,
            log: self.log,
        }
    }
}

/// Earliest step at which every one of the last `window` steps met the
/// platform score target with all weighted violations non-positive.
pub fn check_convergence<R: Real>(
    steps: &[StepMetrics<R>],
    score_target: R,
    window: usize,
) -> Option<usize> {
    if window == 0 || steps.len() < window {
        return None;
    }
    let good: Vec<bool> = steps
        .iter()
        .map(|m| {
            m.platform.score_delta >= score_target
                && m.weighted_violation.iter().all(|v| *v <= R::zero())
        })
        .collect();
    (window..=steps.len()).find(|&t| good[t - window..t].iter().all(|g| *g))
        .map(|t| steps[t - 1].step)
}

fn check_environment<R: Real>(
    config: &ExperimentConfig<R>,
    env: &Environment<R>,
) -> Result<(), OptimizerError> {
    if env.cohort_count() != config.cohort_count() {
        return Err(OptimizerError::Mismatch(format!(
            "{} cohorts in environment, {} in config",
            env.cohort_count(),
            config.cohort_count()
        )));
    }
    if env.policy_dim != config.experiment.policy_dim {
        return Err(OptimizerError::Mismatch(format!(
            "policy dimension {} in environment, {} in config",
            env.policy_dim, config.experiment.policy_dim
        )));
    }
    if env.impression_budgets != config.experiment.impression_budgets {
        return Err(OptimizerError::Mismatch(
            "impression budgets differ between environment and config".into(),
        ));
    }
    Ok(())
}

/// Runs one `(algorithm, seed)` experiment against a simulated environment.
pub fn run<R: Real>(
    algorithm: Algorithm,
    config: &ExperimentConfig<R>,
    env: &Environment<R>,
    seed: u64,
) -> Result<RunResult<R>, OptimizerError> {
    check_environment(config, env)?;
    let mut state = OptimizerState::new(algorithm, config, seed)?;
    for t in 1..=config.experiment.horizon {
        let z = env.sample_context(seed, t as u64);
        state.step(&z, |decisions, z| {
            crate::sim::observe(env, decisions, z, seed, t as u64)
        })?;
        if config.experiment.stop_at_convergence && state.converged_at().is_some() {
            break;
        }
    }
    Ok(state.finish())
}

pub fn run_ctrcbo<R: Real>(
    config: &ExperimentConfig<R>,
    env: &Environment<R>,
    seed: u64,
) -> Result<RunResult<R>, OptimizerError> {
    run(Algorithm::Ctrcbo, config, env, seed)
}

pub fn run_naive_cbo<R: Real>(
    config: &ExperimentConfig<R>,
    env: &Environment<R>,
    seed: u64,
) -> Result<RunResult<R>, OptimizerError> {
    run(Algorithm::NaiveCbo, config, env, seed)
}

pub fn run_random_baseline<R: Real>(
    config: &ExperimentConfig<R>,
    env: &Environment<R>,
    seed: u64,
) -> Result<RunResult<R>, OptimizerError> {
    run(Algorithm::RandomBaseline, config, env, seed)
}

/// Per-cohort surrogates refit on the prefix of a finished run, for
/// held-out prediction checks.
#[derive(Debug, Clone)]
pub struct ProxyModels<R: Real> {
    /// Records with `step <= t0` were used for fitting.
    pub t0: usize,
    /// One (score GP, impressions GP) pair per cohort.
    pub per_cohort: Vec<(GpModel<R>, GpModel<R>)>,
}

/// Held-out prediction quality of the surrogates on a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyPredictionReport<R> {
    pub t0: usize,
    pub held_out_steps: usize,
    /// Mean absolute error of the platform score-delta prediction (pp).
    pub mae_score: R,
    /// Mean absolute error of the platform impressions-delta prediction (pp).
    pub mae_impressions: R,
    pub max_abs_err_score: R,
    pub max_abs_err_impressions: R,
}

/// Refits per-cohort surrogates on the first 80% of a finished run.
pub fn fit_proxy_models<R: Real>(
    result: &RunResult<R>,
    config: &ExperimentConfig<R>,
) -> Result<ProxyModels<R>, OptimizerError> {
    let executed = result.steps.len();
    let t0 = ((executed as f64) * 0.8).floor() as usize;
    let t0 = t0.max(cold_start_steps(config.experiment.policy_dim));
    if t0 >= executed {
        return Err(OptimizerError::ProxyWindow { executed, t0 });
    }
    let opt = &config.optimizer;
    let mut per_cohort = Vec::with_capacity(result.log.per_cohort.len());
    for records in &result.log.per_cohort {
        let prefix: Vec<&CohortRecord<R>> =
            records.iter().filter(|r| r.step <= t0).collect();
        let lo = prefix.len().saturating_sub(opt.fit_max_points);
        let prefix = &prefix[lo..];
        let inputs: Vec<Vec<R>> = prefix
            .iter()
            .map(|r| input_row(&r.theta, &r.context, &[]))
            .collect();
        let scores: Vec<R> = prefix.iter().map(|r| r.observed.score_delta).collect();
        let imprs: Vec<R> = prefix
            .iter()
            .map(|r| r.observed.impressions_delta)
            .collect();
        // One-shot fit: selection runs on the full fit set, so the chosen
        // kernel is guaranteed to factor when refit below.
        let (kernel_score, noise_score) = select_hyperparameters(
            &inputs,
            &scores,
            &opt.kernel_grid,
            &opt.noise_grid,
            mean(&scores),
        )?;
        let (kernel_impressions, noise_impressions) = select_hyperparameters(
            &inputs,
            &imprs,
            &opt.kernel_grid,
            &opt.noise_grid,
            mean(&imprs),
        )?;
        let f_gp = GpModel::fit(&inputs, &scores, kernel_score, noise_score, mean(&scores))?;
        let c_gp = GpModel::fit(
            &inputs,
            &imprs,
            kernel_impressions,
            noise_impressions,
            mean(&imprs),
        )?;
        per_cohort.push((f_gp, c_gp));
    }
    Ok(ProxyModels { t0, per_cohort })
}

/// Compares surrogate platform predictions against realized outcomes on the
/// steps after the fit window.
pub fn proxy_prediction_check<R: Real>(
    result: &RunResult<R>,
    models: &ProxyModels<R>,
    weights: &[R],
) -> Result<ProxyPredictionReport<R>, OptimizerError> {
    let executed = result.steps.len();
    if models.t0 >= executed {
        return Err(OptimizerError::ProxyWindow {
            executed,
            t0: models.t0,
        });
    }
    let mut abs_score: Vec<R> = Vec::new();
    let mut abs_imprs: Vec<R> = Vec::new();
    for metrics in result.steps.iter().filter(|m| m.step > models.t0) {
        let mut predicted: Vec<ObjectivePair<R>> = Vec::with_capacity(models.per_cohort.len());
        for (k, (f_gp, c_gp)) in models.per_cohort.iter().enumerate() {
            let record = result.log.per_cohort[k]
                .iter()
                .find(|r| r.step == metrics.step)
                .expect("every step has one record per cohort");
            let x = input_row(&record.theta, &record.context, &[]);
            predicted.push(ObjectivePair::new(
                f_gp.predict(&x)?.mean,
                c_gp.predict(&x)?.mean,
            ));
        }
        let platform_pred = aggregate(&predicted, weights)?;
        abs_score.push((platform_pred.score_delta - metrics.platform.score_delta).abs());
        abs_imprs.push(
            (platform_pred.impressions_delta - metrics.platform.impressions_delta).abs(),
        );
    }
    let max = |xs: &[R]| xs.iter().fold(R::zero(), |a, b| a.max(*b));
    Ok(ProxyPredictionReport {
        t0: models.t0,
        held_out_steps: abs_score.len(),
        mae_score: mean(&abs_score),
        mae_impressions: mean(&abs_imprs),
        max_abs_err_score: max(&abs_score),
        max_abs_err_impressions: max(&abs_imprs),
    })
}
