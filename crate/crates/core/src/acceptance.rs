//! Release acceptance gate.
//!
//! Nine checks certify a build. Three compare the numerical kernels against
//! the independent dense oracles in [`oracle`] (GP posterior and marginal
//! likelihood, noiseless interpolation, hypervolume). Two property-test
//! safety invariants (dual-ascent non-negativity, the trust-region
//! automaton). The remaining four run the canonical three-cohort benchmark —
//! twenty seeds for each of the three algorithms, shared across criteria and
//! computed once — and grade constraint compliance, convergence ordering
//! against the baselines, held-out prediction accuracy, and bit-exact
//! reproducibility.
//!
//! [`run_all`] evaluates every criterion and returns one [`CriterionResult`]
//! each; the `accept` CLI subcommand and the `acceptance` integration test
//! both print one line per criterion and fail if any criterion fails.

pub mod oracle;

use std::fmt;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::acquisition::pareto::{hvi, hypervolume_2d, ObjectivePair, ParetoFront};
use crate::config::ExperimentConfig;
use crate::gp::{GpModel, KernelSpec, JITTER_INITIAL};
use crate::optimizer::{
    fit_proxy_models, proxy_prediction_check, run, Algorithm, RunResult,
};
use crate::sim::{Environment, PolicyVector, ScanCertificate};
use crate::trust_region::{GlobalBounds, TrustRegion, TrustRegionParams};

/// Ground-truth lattice scan of the benchmark environment, regenerated with
/// the `refresh_scan_data` example whenever the benchmark config changes.
const SCAN_CACHE_JSON: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/benchmark_3cohort_scan.json"));

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    /// 1-based position in the gate.
    pub index: usize,
    /// Stable kebab-case identifier.
    pub name: &'static str,
    pub passed: bool,
    /// Human-readable evidence: the measured quantities and their bounds.
    pub details: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {} {:<24} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.index,
            self.name,
            self.details
        )
    }
}

/// Evaluates the whole gate in order.
pub fn run_all() -> Vec<CriterionResult> {
    vec![
        gp_oracle_equivalence(),
        noiseless_interpolation(),
        hypervolume_oracle(),
        dual_safety(),
        time_average_constraint(),
        convergence_ordering(),
        proxy_prediction(),
        determinism(),
        trust_region_automaton(),
    ]
}

pub fn all_passed(results: &[CriterionResult]) -> bool {
    results.iter().all(|r| r.passed)
}

// ---------------------------------------------------------------------------
// Shared benchmark batch
// ---------------------------------------------------------------------------

/// All benchmark runs the gate grades: twenty seeds per algorithm, computed
/// once per process and shared by criteria 4–8.
struct BenchmarkBatch {
    config: ExperimentConfig<f64>,
    ctrcbo: Vec<RunResult<f64>>,
    cbo: Vec<RunResult<f64>>,
    random: Vec<RunResult<f64>>,
    /// Wall-clock time of the parallel batch, graded by criterion 6.
    wall: Duration,
}

impl BenchmarkBatch {
    fn all_runs(&self) -> impl Iterator<Item = &RunResult<f64>> {
        self.ctrcbo.iter().chain(&self.cbo).chain(&self.random)
    }
}

fn benchmark_batch() -> &'static BenchmarkBatch {
    static BATCH: OnceLock<BenchmarkBatch> = OnceLock::new();
    BATCH.get_or_init(|| {
        let config: ExperimentConfig<f64> = ExperimentConfig::benchmark_3cohort();
        let env = Environment::from_experiment(&config);
        let seeds = config.experiment.seeds.clone();
        let jobs: Vec<(Algorithm, u64)> = Algorithm::ALL
            .into_iter()
            .flat_map(|algorithm| seeds.iter().map(move |&seed| (algorithm, seed)))
            .collect();
        let started = Instant::now();
        let results: Vec<RunResult<f64>> = jobs
            .par_iter()
            .map(|&(algorithm, seed)| {
                run(algorithm, &config, &env, seed).unwrap_or_else(|e| {
                    panic!("benchmark run ({algorithm}, seed {seed}) failed: {e}")
                })
            })
            .collect();
        let wall = started.elapsed();
        let mut ctrcbo = Vec::new();
        let mut cbo = Vec::new();
        let mut random = Vec::new();
        for ((algorithm, _), result) in jobs.into_iter().zip(results) {
            match algorithm {
                Algorithm::Ctrcbo => ctrcbo.push(result),
                Algorithm::NaiveCbo => cbo.push(result),
                Algorithm::RandomBaseline => random.push(result),
            }
        }
        BenchmarkBatch {
            config,
            ctrcbo,
            cbo,
            random,
            wall,
        }
    })
}

// ---------------------------------------------------------------------------
// Criterion 1: GP posterior and marginal likelihood vs. dense oracle
// ---------------------------------------------------------------------------

/// Compares `GpModel::predict` and `log_marginal_likelihood` against dense
/// Gauss–Jordan solves of the same jittered Gram system on 200 randomized
/// instances with up to 10 training points.
///
/// The generator keeps the systems well-conditioned — a noise floor of 1e-2,
/// a gentle slope range for the non-PSD logistic kernel, and a resample
/// whenever the fit had to escalate jitter — because an absolute tolerance of
/// 1e-8 is only meaningful when both algorithms see a numerically benign
/// system. Barely-positive-definite fits are exercised by the jitter and
/// fallback tests elsewhere.
pub fn gp_oracle_equivalence() -> CriterionResult {
    const INSTANCES: usize = 200;
    const QUERIES_PER_INSTANCE: usize = 3;
    const TOL: f64 = 1e-8;
    const BUDGET: Duration = Duration::from_secs(10);
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0001);
    let mut max_mean = 0.0f64;
    let mut max_variance = 0.0f64;
    let mut max_lml = 0.0f64;
    let mut produced = 0usize;
    let mut resampled = 0usize;
    while produced < INSTANCES {
        let d = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=10);
        let inputs = separated_points(&mut rng, n, d, -2.0, 2.0, 0.05);
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let prior_mean = targets.iter().sum::<f64>() / n as f64;
        let kernel = if rng.gen_bool(0.5) {
            KernelSpec::rbf_iso(rng.gen_range(0.3..3.0), rng.gen_range(0.5..2.0))
        } else {
            KernelSpec::sigmoid(
                rng.gen_range(0.01..0.08),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(0.5..2.0),
            )
        };
        let noise_var = 10.0f64.powf(rng.gen_range(-2.0..-1.0));
        let model = match GpModel::fit(&inputs, &targets, kernel, noise_var, prior_mean) {
            Ok(model) => model,
            Err(_) => {
                resampled += 1;
                continue;
            }
        };
        if model.jitter_used > JITTER_INITIAL {
            resampled += 1;
            continue;
        }
        produced += 1;
        for _ in 0..QUERIES_PER_INSTANCE {
            let x_star: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.5..2.5)).collect();
            let got = model.predict(&x_star).expect("prediction on valid query");
            let want = oracle::gp_predict_reference(&model, &x_star);
            max_mean = max_mean.max((got.mean - want.mean).abs());
            max_variance = max_variance.max((got.variance - want.variance).abs());
        }
        let lml_gap = (model.log_marginal_likelihood() - oracle::gp_lml_reference(&model)).abs();
        max_lml = max_lml.max(lml_gap);
    }
    let elapsed = started.elapsed();
    let passed =
        max_mean <= TOL && max_variance <= TOL && max_lml <= TOL && elapsed < BUDGET;
    CriterionResult {
        index: 1,
        name: "gp-oracle-equivalence",
        passed,
        details: format!(
            "{INSTANCES} instances x {QUERIES_PER_INSTANCE} queries: max |d mean| {max_mean:.2e}, \
             max |d variance| {max_variance:.2e}, max |d log-marginal| {max_lml:.2e} \
             (tolerance {TOL:.0e}); {resampled} ill-conditioned draws resampled; \
             {:.2}s of {:.0}s budget",
            elapsed.as_secs_f64(),
            BUDGET.as_secs_f64(),
        ),
    }
}

// ---------------------------------------------------------------------------
// Criterion 2: noiseless GP interpolates its training data
// ---------------------------------------------------------------------------

/// With zero observation noise a squared-exponential GP must reproduce every
/// training target at its own input. Points are kept 0.6 apart so the Gram
/// systems stay solvable at the initial jitter and the 1e-6 tolerance
/// measures the regression code rather than floating-point conditioning.
pub fn noiseless_interpolation() -> CriterionResult {
    const INSTANCES: usize = 100;
    const TOL: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0002);
    let mut max_error = 0.0f64;
    let mut max_variance = 0.0f64;
    let mut points_checked = 0usize;
    for _ in 0..INSTANCES {
        let d = rng.gen_range(1..=3);
        let n_max = if d == 1 { 5 } else { 9 };
        let n = rng.gen_range(2..=n_max);
        let inputs = separated_points(&mut rng, n, d, -2.0, 2.0, 0.6);
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let prior_mean = targets.iter().sum::<f64>() / n as f64;
        let kernel = KernelSpec::rbf_iso(rng.gen_range(0.35..0.8), rng.gen_range(0.5..2.0));
        let model = GpModel::fit(&inputs, &targets, kernel, 0.0, prior_mean)
            .expect("noiseless RBF fit on separated points");
        for (x, y) in inputs.iter().zip(&targets) {
            let prediction = model.predict(x).expect("prediction at training point");
            max_error = max_error.max((prediction.mean - y).abs());
            max_variance = max_variance.max(prediction.variance);
            points_checked += 1;
        }
    }
    let passed = max_error <= TOL;
    CriterionResult {
        index: 2,
        name: "noiseless-interpolation",
        passed,
        details: format!(
            "{INSTANCES} noise-free instances, {points_checked} training points: \
             max |predicted - observed| {max_error:.2e} (tolerance {TOL:.0e}); \
             max posterior variance at a training point {max_variance:.2e}"
        ),
    }
}

// ---------------------------------------------------------------------------
// Criterion 3: hypervolume and improvement vs. integration oracle
// ---------------------------------------------------------------------------

/// Checks the exact sweep hypervolume against brute-force column integration
/// on 100 random fronts, and the direct staircase-walk improvement against
/// both its sign/domination contract and the recompute-and-subtract
/// definition.
pub fn hypervolume_oracle() -> CriterionResult {
    const FRONTS: usize = 100;
    const COLUMNS: usize = 1_000_000;
    const CANDIDATES_PER_FRONT: usize = 50;
    const REL_TOL: f64 = 1e-3;
    const DOMINATED_TOL: f64 = 1e-12;
    const RECOMPUTE_TOL: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0003);
    let mut max_rel = 0.0f64;
    let mut max_recompute_gap = 0.0f64;
    let mut negative_improvements = 0usize;
    let mut dominated_violations = 0usize;
    for _ in 0..FRONTS {
        let n = rng.gen_range(1..=10);
        // Raw points sit in [0.5, 3]^2 against a (-0.2, -0.2) reference, so
        // every front encloses at least 0.49 of area and the relative
        // tolerance has a sound denominator.
        let raw: Vec<ObjectivePair<f64>> = (0..n)
            .map(|_| ObjectivePair::new(rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0)))
            .collect();
        let reference = ObjectivePair::new(-0.2, -0.2);
        let front = ParetoFront::new(&raw, reference);
        let fast = hypervolume_2d(&front);
        let slow = oracle::hypervolume_by_integration(&front, COLUMNS);
        max_rel = max_rel.max((fast - slow).abs() / slow);
        for _ in 0..CANDIDATES_PER_FRONT {
            let candidate =
                ObjectivePair::new(rng.gen_range(-0.5..3.5), rng.gen_range(-0.5..3.5));
            let gain = hvi(&candidate, &front);
            if gain < 0.0 {
                negative_improvements += 1;
            }
            let mut extended = raw.clone();
            extended.push(candidate);
            let recomputed = hypervolume_2d(&ParetoFront::new(&extended, reference)) - fast;
            max_recompute_gap = max_recompute_gap.max((gain - recomputed).abs());
        }
        for point in front.points() {
            let dominated = ObjectivePair::new(
                point.score_delta - 0.1,
                point.impressions_delta - 0.1,
            );
            if hvi(&dominated, &front).abs() > DOMINATED_TOL {
                dominated_violations += 1;
            }
        }
    }
    let passed = max_rel <= REL_TOL
        && negative_improvements == 0
        && dominated_violations == 0
        && max_recompute_gap <= RECOMPUTE_TOL;
    CriterionResult {
        index: 3,
        name: "hypervolume-oracle",
        passed,
        details: format!(
            "{FRONTS} fronts vs {COLUMNS}-column integration: max relative gap {max_rel:.2e} \
             (tolerance {REL_TOL:.0e}); {} candidate improvements all >= 0 \
             ({negative_improvements} negative), dominated candidates at zero within \
             {DOMINATED_TOL:.0e} ({dominated_violations} violations), max gap vs \
             recompute-and-subtract {max_recompute_gap:.2e}",
            FRONTS * CANDIDATES_PER_FRONT,
        ),
    }
}

// ---------------------------------------------------------------------------
// Criterion 4: dual multipliers are safe
// ---------------------------------------------------------------------------

/// Every multiplier after every dual-ascent step in every benchmark run must
/// be non-negative, exactly; and a run whose constraint can never bind must
/// keep its multipliers pinned at exactly zero.
pub fn dual_safety() -> CriterionResult {
    let batch = benchmark_batch();
    let mut entries = 0usize;
    let mut negative = 0usize;
    for result in batch.all_runs() {
        for step in &result.log.dual_trajectory {
            for &lambda in step {
                entries += 1;
                // Negated on purpose: a NaN multiplier must count as a
                // violation, and `NaN >= 0` is false.
                #[allow(clippy::neg_cmp_op_on_partial_ord)]
                if !(lambda >= 0.0) {
                    negative += 1;
                }
            }
        }
    }
    // Always-feasible variant: a huge impression budget keeps every step
    // strictly inside the constraint, so the clamped ascent must stay at 0.
    let mut config: ExperimentConfig<f64> = ExperimentConfig::benchmark_3cohort();
    config.experiment.impression_budgets = vec![50.0];
    config.experiment.horizon = 60;
    config
        .validate()
        .expect("always-feasible variant is a valid config");
    let env = Environment::from_experiment(&config);
    let feasible =
        run(Algorithm::Ctrcbo, &config, &env, 1).expect("always-feasible run completes");
    let pinned = feasible
        .log
        .dual_trajectory
        .iter()
        .flatten()
        .all(|&lambda| lambda == 0.0);
    let passed = entries > 0 && negative == 0 && pinned;
    CriterionResult {
        index: 4,
        name: "dual-safety",
        passed,
        details: format!(
            "{entries} multiplier values across {} benchmark runs all >= 0 \
             ({negative} negative); always-feasible 60-step run kept every multiplier \
             at exactly 0: {pinned}",
            batch.all_runs().count(),
        ),
    }
}

// ---------------------------------------------------------------------------
// Criterion 5: time-average constraint compliance on the benchmark
// ---------------------------------------------------------------------------

/// The benchmark's median time-average weighted violation at the full
/// horizon must stay within `epsilon + 0.25` percentage points — graded on
/// both the signed average and the stricter positive-part average — and the
/// positive-part average must be non-increasing across the checkpoint
/// horizons, the empirical signature of sub-linear cumulative violation.
/// The cached lattice scan certifies the target is genuinely reachable.
pub fn time_average_constraint() -> CriterionResult {
    const HORIZONS: [usize; 3] = [50, 100, 200];
    let batch = benchmark_batch();
    let epsilon = batch.config.optimizer.epsilon;
    let bound = epsilon + 0.25;
    let signed: Vec<f64> = batch
        .ctrcbo
        .iter()
        .map(|r| r.final_time_average_violation[0])
        .collect();
    let positive: Vec<f64> = batch
        .ctrcbo
        .iter()
        .map(|r| positive_part_average(r, r.steps.len()))
        .collect();
    let median_signed = median(signed).expect("non-empty batch");
    let median_positive = median(positive).expect("non-empty batch");
    let checkpoint_means: Vec<f64> = HORIZONS
        .iter()
        .map(|&horizon| {
            let sum: f64 = batch
                .ctrcbo
                .iter()
                .map(|r| positive_part_average(r, horizon))
                .sum();
            sum / batch.ctrcbo.len() as f64
        })
        .collect();
    let non_increasing = checkpoint_means.windows(2).all(|w| w[0] >= w[1] - 1e-12);
    let certificate: ScanCertificate =
        serde_json::from_str(SCAN_CACHE_JSON).expect("cached lattice scan parses");
    let certificate_ok = certificate.score_margin >= 0.2
        && certificate.best_feasible.is_some()
        && certificate.score_target == batch.config.experiment.score_target
        && certificate.impression_budget == batch.config.experiment.impression_budgets[0];
    let passed = median_signed <= bound && median_positive <= bound && non_increasing
        && certificate_ok;
    CriterionResult {
        index: 5,
        name: "time-average-constraint",
        passed,
        details: format!(
            "median time-average violation over {} seeds: signed {median_signed:+.4} pp, \
             positive-part {median_positive:.4} pp (bound epsilon + 0.25 = {bound:.2} pp); \
             positive-part means at steps {HORIZONS:?} = [{}] non-increasing: \
             {non_increasing}; lattice certificate margin {:.4} pp (needs >= 0.2)",
            batch.ctrcbo.len(),
            checkpoint_means
                .iter()
                .map(|m| format!("{m:.4}"))
                .collect::<Vec<_>>()
                .join(", "),
            certificate.score_margin,
        ),
    }
}

// ---------------------------------------------------------------------------
// Criterion 6: convergence ordering against the baselines
// ---------------------------------------------------------------------------

/// The cohort trust-region optimizer must reach the benchmark target in
/// strictly fewer median steps than the pooled-surrogate baseline, with at
/// least as high a convergence rate, and the whole sixty-run batch must fit
/// the ten-minute budget.
pub fn convergence_ordering() -> CriterionResult {
    const BUDGET: Duration = Duration::from_secs(600);
    let batch = benchmark_batch();
    let (ctrcbo_median, ctrcbo_rate) = convergence_stats(&batch.ctrcbo);
    let (cbo_median, cbo_rate) = convergence_stats(&batch.cbo);
    let (random_median, random_rate) = convergence_stats(&batch.random);
    let ordering = match (ctrcbo_median, cbo_median) {
        (Some(fast), Some(slow)) => fast < slow,
        // A baseline whose median seed never converges is strictly slower.
        (Some(_), None) => true,
        _ => false,
    };
    let rate_ok = ctrcbo_rate >= cbo_rate;
    let within_budget = batch.wall < BUDGET;
    let passed = ordering && rate_ok && within_budget;
    let total = batch.ctrcbo.len();
    CriterionResult {
        index: 6,
        name: "convergence-ordering",
        passed,
        details: format!(
            "median steps to convergence: ctrcbo {} < cbo {} (strict: {ordering}); \
             convergence rate ctrcbo {ctrcbo_rate}/{total} >= cbo {cbo_rate}/{total}; \
             random baseline {} at {random_rate}/{total}; \
             batch of {} runs took {:.1}s of {:.0}s budget",
            fmt_median(ctrcbo_median),
            fmt_median(cbo_median),
            fmt_median(random_median),
            batch.all_runs().count(),
            batch.wall.as_secs_f64(),
            BUDGET.as_secs_f64(),
        ),
    }
}

// ---------------------------------------------------------------------------
// Criterion 7: held-out proxy prediction accuracy
// ---------------------------------------------------------------------------

/// Surrogates refit on the first 80% of each benchmark run must predict the
/// held-out platform score and impressions deltas with a median (across
/// seeds) mean absolute error of at most 0.15 percentage points.
pub fn proxy_prediction() -> CriterionResult {
    const TOL: f64 = 0.15;
    let batch = benchmark_batch();
    let env = Environment::from_experiment(&batch.config);
    let weights = env.volume_weights();
    let reports: Vec<_> = batch
        .ctrcbo
        .par_iter()
        .map(|result| {
            let models =
                fit_proxy_models(result, &batch.config).expect("proxy refit succeeds");
            proxy_prediction_check(result, &models, &weights)
                .expect("held-out window is non-empty")
        })
        .collect();
    let held_out = reports.first().map_or(0, |r| r.held_out_steps);
    let median_score =
        median(reports.iter().map(|r| r.mae_score).collect()).expect("non-empty batch");
    let median_impressions = median(reports.iter().map(|r| r.mae_impressions).collect())
        .expect("non-empty batch");
    let worst_score = reports.iter().map(|r| r.mae_score).fold(0.0, f64::max);
    let worst_impressions = reports
        .iter()
        .map(|r| r.mae_impressions)
        .fold(0.0, f64::max);
    let passed = median_score <= TOL && median_impressions <= TOL;
    CriterionResult {
        index: 7,
        name: "proxy-prediction",
        passed,
        details: format!(
            "{} runs, {held_out} held-out steps each: median MAE score {median_score:.4} pp, \
             impressions {median_impressions:.4} pp (tolerance {TOL} pp); \
             worst seed {worst_score:.4} / {worst_impressions:.4} pp",
            reports.len(),
        ),
    }
}

// ---------------------------------------------------------------------------
// Criterion 8: determinism
// ---------------------------------------------------------------------------

/// Re-running any (algorithm, seed) pair must reproduce the batch result
/// bit for bit, verified on the serialized form.
pub fn determinism() -> CriterionResult {
    let batch = benchmark_batch();
    let env = Environment::from_experiment(&batch.config);
    let seed = batch.config.experiment.seeds[0];
    let mut bytes_compared = 0usize;
    let mut mismatched: Vec<&'static str> = Vec::new();
    for (algorithm, runs) in [
        (Algorithm::Ctrcbo, &batch.ctrcbo),
        (Algorithm::NaiveCbo, &batch.cbo),
        (Algorithm::RandomBaseline, &batch.random),
    ] {
        let first = runs
            .iter()
            .find(|r| r.seed == seed)
            .expect("batch contains the first seed");
        let again = run(algorithm, &batch.config, &env, seed).expect("rerun completes");
        let original = serde_json::to_string(first).expect("run serializes");
        let repeated = serde_json::to_string(&again).expect("rerun serializes");
        bytes_compared += original.len();
        if original != repeated {
            mismatched.push(algorithm.name());
        }
    }
    let passed = mismatched.is_empty();
    CriterionResult {
        index: 8,
        name: "determinism",
        passed,
        details: if passed {
            format!(
                "re-ran all three algorithms at seed {seed}: serialized results \
                 byte-identical across executions ({bytes_compared} bytes compared)"
            )
        } else {
            format!("seed {seed} reruns diverged for: {}", mismatched.join(", "))
        },
    }
}

// ---------------------------------------------------------------------------
// Criterion 9: trust-region automaton properties
// ---------------------------------------------------------------------------

/// Runs 1000 random outcome sequences through the trust-region automaton in
/// lockstep with the independently written reference, checking exact
/// agreement plus the standing invariants: edge length bounded by its
/// min/max, at most one live streak, monotone restart count, and candidate
/// boxes that stay inside the global bounds around their center.
pub fn trust_region_automaton() -> CriterionResult {
    const SEQUENCES: usize = 1000;
    const STEPS: usize = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0009);
    let mut transitions = 0usize;
    let mut first_failure: Option<String> = None;
    'sequences: for sequence in 0..SEQUENCES {
        let dim = rng.gen_range(1..=4);
        let bounds = GlobalBounds::unit(dim);
        let length_min = rng.gen_range(0.01..0.1);
        let length_max = rng.gen_range(0.4..1.0);
        let params = TrustRegionParams {
            length_init: rng.gen_range(length_min..length_max),
            length_min,
            length_max,
            tau_succ: rng.gen_range(1..=5),
            tau_fail: rng.gen_range(1..=6),
        };
        let center = PolicyVector((0..dim).map(|_| rng.gen_range(0.0..1.0)).collect());
        let mut region = TrustRegion::new(sequence % 7, center, params, &bounds)
            .expect("random center lies inside the unit box");
        let mut reference = oracle::ReferenceAutomaton::new(params);
        let p_success = [0.2, 0.5, 0.8][rng.gen_range(0..3)];
        let fail = |message: String| -> String { format!("sequence {sequence}: {message}") };
        for step in 0..STEPS {
            if rng.gen_bool(0.1) {
                let target = PolicyVector((0..dim).map(|_| rng.gen_range(0.0..1.0)).collect());
                let (length_before, restarts_before) = (region.length, region.restart_count);
                region = region
                    .recenter(target.clone(), &bounds)
                    .expect("recenter target lies inside the unit box");
                if region.center != target
                    || region.length != length_before
                    || region.restart_count != restarts_before
                {
                    first_failure =
                        Some(fail(format!("step {step}: recenter changed automaton state")));
                    break 'sequences;
                }
            }
            let success = rng.gen_bool(p_success);
            region = region.update_on_outcome(success);
            reference.observe(success);
            transitions += 1;
            if region.length != reference.length
                || region.success_streak != reference.success_streak
                || region.failure_streak != reference.failure_streak
                || region.restart_count != reference.restart_count
            {
                first_failure = Some(fail(format!(
                    "step {step}: diverged from reference \
                     (length {} vs {}, streaks {}/{} vs {}/{}, restarts {} vs {})",
                    region.length,
                    reference.length,
                    region.success_streak,
                    region.failure_streak,
                    reference.success_streak,
                    reference.failure_streak,
                    region.restart_count,
                    reference.restart_count,
                )));
                break 'sequences;
            }
            if !(region.length >= length_min && region.length <= length_max) {
                first_failure = Some(fail(format!(
                    "step {step}: length {} escaped [{length_min}, {length_max}]",
                    region.length
                )));
                break 'sequences;
            }
            if region.success_streak != 0 && region.failure_streak != 0 {
                first_failure = Some(fail(format!("step {step}: both streaks live")));
                break 'sequences;
            }
            let region_box = region.region_bounds(&bounds);
            let inside_global = region_box
                .lower
                .iter()
                .zip(&region_box.upper)
                .all(|(lo, hi)| *lo >= 0.0 && *hi <= 1.0 && lo <= hi);
            if !inside_global || !region_box.contains(&region.center) {
                first_failure = Some(fail(format!(
                    "step {step}: candidate box escaped the global bounds"
                )));
                break 'sequences;
            }
        }
    }
    let passed = first_failure.is_none();
    CriterionResult {
        index: 9,
        name: "trust-region-automaton",
        passed,
        details: match first_failure {
            None => format!(
                "{SEQUENCES} random outcome sequences, {transitions} transitions: \
                 automaton matches the independent reference rule for rule; lengths \
                 stayed in bounds, streaks mutually exclusive, candidate boxes inside \
                 the global box"
            ),
            Some(message) => message,
        },
    }
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

/// Points drawn uniformly from `[lo, hi]^d` with a minimum pairwise
/// separation, restarting the draw on pathological packings so the loop
/// always terminates with the requested count.
fn separated_points(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    lo: f64,
    hi: f64,
    min_distance: f64,
) -> Vec<Vec<f64>> {
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while points.len() < n {
        let candidate: Vec<f64> = (0..d).map(|_| rng.gen_range(lo..hi)).collect();
        let separated = points.iter().all(|p| {
            let squared: f64 = p
                .iter()
                .zip(&candidate)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            squared.sqrt() >= min_distance
        });
        if separated {
            points.push(candidate);
        }
        attempts += 1;
        if attempts > 50_000 {
            points.clear();
            attempts = 0;
        }
    }
    points
}

/// Median of an unordered sample; `None` on an empty one.
fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Median steps-to-convergence (non-converged seeds rank as infinite, so the
/// median is `None` whenever it falls on one) plus the converged count.
fn convergence_stats(runs: &[RunResult<f64>]) -> (Option<f64>, usize) {
    let mut keys: Vec<Option<usize>> = runs.iter().map(|r| r.steps_to_convergence).collect();
    keys.sort_by_key(|k| k.unwrap_or(usize::MAX));
    let converged = keys.iter().filter(|k| k.is_some()).count();
    let n = keys.len();
    if n == 0 {
        return (None, 0);
    }
    let median = if n % 2 == 1 {
        keys[n / 2].map(|v| v as f64)
    } else {
        match (keys[n / 2 - 1], keys[n / 2]) {
            (Some(a), Some(b)) => Some(0.5 * (a + b) as f64),
            _ => None,
        }
    };
    (median, converged)
}

fn fmt_median(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v}"),
        None => "none".to_string(),
    }
}

/// Mean positive part of the first-constraint weighted violation over the
/// first `horizon` steps of a run.
fn positive_part_average(result: &RunResult<f64>, horizon: usize) -> f64 {
    assert!(
        horizon >= 1 && horizon <= result.log.weighted_violations.len(),
        "horizon {horizon} outside the executed range"
    );
    let sum: f64 = result.log.weighted_violations[..horizon]
        .iter()
        .map(|v| v[0].max(0.0))
        .sum();
    sum / horizon as f64
}
