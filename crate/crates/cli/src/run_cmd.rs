//! `run`: execute seeded `(algorithm, seed)` jobs in parallel and write one
//! metrics file per job plus a manifest and a cross-seed summary.
//!
//! All runs finish before anything touches the filesystem, and the summary
//! is written last, so a directory containing `summary.json` is always a
//! complete run set. On any failure the files written so far are removed and
//! the command exits nonzero.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use ctrcbo::optimizer::{self, Algorithm};
use ctrcbo::sim::Environment;
use ctrcbo::{Config, Run};
use rayon::prelude::*;

use crate::output::OutputWriter;
use crate::schema::{
    self, AlgorithmSummary, OutputFormat, RunManifest, RunSummary, MANIFEST_FILE, SUMMARY_FILE,
};
use crate::stats;

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment configuration file (TOML).
    #[arg(long, env = "CTRCBO_CONFIG", value_name = "PATH")]
    pub config: PathBuf,

    /// Seeds to run, overriding the config's list (comma-separated).
    #[arg(long, env = "CTRCBO_SEEDS", value_delimiter = ',', value_name = "a,b,c")]
    pub seeds: Option<Vec<u64>>,

    /// Algorithms to run: ctrcbo, cbo, random (comma-separated or repeated;
    /// default all three).
    #[arg(
        long = "algo",
        env = "CTRCBO_ALGO",
        value_delimiter = ',',
        value_parser = parse_algorithm,
        value_name = "NAME"
    )]
    pub algo: Option<Vec<Algorithm>>,

    /// Directory the manifest, metrics, and summary files are written to.
    #[arg(long, env = "CTRCBO_OUT", value_name = "DIR")]
    pub out: PathBuf,

    /// Metrics file format.
    #[arg(long, env = "CTRCBO_FORMAT", value_enum, default_value = "csv")]
    pub format: OutputFormat,
}

fn parse_algorithm(name: &str) -> Result<Algorithm, String> {
    name.parse()
}

pub fn execute(args: RunArgs) -> Result<()> {
    let config_text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let config = Config::from_toml_str(&config_text)
        .with_context(|| format!("invalid config {}", args.config.display()))?;

    let seeds = dedupe(args.seeds.unwrap_or_else(|| config.experiment.seeds.clone()));
    if seeds.is_empty() {
        bail!("no seeds requested");
    }
    let algorithms = dedupe(args.algo.unwrap_or_else(|| Algorithm::ALL.to_vec()));

    // Run everything first; artifacts only appear once all jobs succeeded.
    let environment = Environment::from_experiment(&config);
    let jobs: Vec<(Algorithm, u64)> = algorithms
        .iter()
        .flat_map(|&algorithm| seeds.iter().map(move |&seed| (algorithm, seed)))
        .collect();
    let outcomes: Vec<Result<Run, _>> = jobs
        .par_iter()
        .map(|&(algorithm, seed)| optimizer::run(algorithm, &config, &environment, seed))
        .collect();
    let mut results: Vec<(Algorithm, u64, Run)> = Vec::with_capacity(jobs.len());
    for (&(algorithm, seed), outcome) in jobs.iter().zip(outcomes) {
        let result = outcome
            .with_context(|| format!("running {} with seed {seed}", algorithm.name()))?;
        results.push((algorithm, seed, result));
    }

    let manifest = RunManifest {
        config_path: args.config.display().to_string(),
        algorithms: algorithms.iter().map(|a| a.name().to_string()).collect(),
        seeds: seeds.clone(),
        format: args.format,
        config_toml: config_text,
    };
    let summary = build_summary(&config, &seeds, &algorithms, &results);
    let cohort_ids: Vec<usize> = config.environment.cohorts.iter().map(|c| c.id).collect();

    let mut writer = OutputWriter::create(&args.out)?;
    let written = write_artifacts(&mut writer, &manifest, &summary, &results, &cohort_ids);
    if let Err(err) = written {
        writer.discard();
        return Err(err);
    }

    println!(
        "wrote {} metrics files, {MANIFEST_FILE}, and {SUMMARY_FILE} to {}",
        results.len(),
        args.out.display()
    );
    for (name, algorithm) in &summary.algorithms {
        println!(
            "  {name}: {}/{} runs converged, median steps to convergence = {}",
            algorithm.converged_runs,
            algorithm.runs,
            stats::fmt_opt(algorithm.median_steps_to_convergence)
        );
    }
    Ok(())
}

fn write_artifacts(
    writer: &mut OutputWriter,
    manifest: &RunManifest,
    summary: &RunSummary,
    results: &[(Algorithm, u64, Run)],
    cohort_ids: &[usize],
) -> Result<()> {
    writer.write(
        MANIFEST_FILE,
        &(serde_json::to_string_pretty(manifest)? + "\n"),
    )?;
    for (algorithm, seed, result) in results {
        let rows = schema::rows_from_result(result, cohort_ids);
        let body = schema::encode_rows(&rows, manifest.format)?;
        writer.write(
            &schema::metrics_filename(algorithm.name(), *seed, manifest.format),
            &body,
        )?;
    }
    writer.write(
        SUMMARY_FILE,
        &(serde_json::to_string_pretty(summary)? + "\n"),
    )?;
    Ok(())
}

fn build_summary(
    config: &Config,
    seeds: &[u64],
    algorithms: &[Algorithm],
    results: &[(Algorithm, u64, Run)],
) -> RunSummary {
    let constraints = config.experiment.impression_budgets.len();
    let mut map = BTreeMap::new();
    for &algorithm in algorithms {
        let runs: Vec<&Run> = results
            .iter()
            .filter(|(a, _, _)| *a == algorithm)
            .map(|(_, _, r)| r)
            .collect();
        let steps: Vec<Option<usize>> = runs.iter().map(|r| r.steps_to_convergence).collect();
        let median_violation: Vec<f64> = (0..constraints)
            .map(|i| {
                let per_seed: Vec<f64> = runs
                    .iter()
                    .map(|r| r.final_time_average_violation[i])
                    .collect();
                stats::median_f64(&per_seed).expect("summary needs at least one run")
            })
            .collect();
        let final_platform = |pick: fn(&Run) -> f64| -> f64 {
            let per_seed: Vec<f64> = runs.iter().map(|r| pick(r)).collect();
            stats::median_f64(&per_seed).expect("summary needs at least one run")
        };
        map.insert(
            algorithm.name().to_string(),
            AlgorithmSummary {
                runs: runs.len(),
                converged_runs: runs.iter().filter(|r| r.converged).count(),
                median_steps_to_convergence: stats::median_steps(&steps),
                median_final_time_average_violation: median_violation,
                median_final_platform_score_delta_pct: final_platform(|r| {
                    r.steps.last().expect("runs execute at least one step").platform.score_delta
                }),
                median_final_platform_impressions_delta_pct: final_platform(|r| {
                    r.steps
                        .last()
                        .expect("runs execute at least one step")
                        .platform
                        .impressions_delta
                }),
            },
        );
    }
    RunSummary {
        horizon: config.experiment.horizon,
        seeds: seeds.to_vec(),
        algorithms: map,
    }
}

/// Order-preserving deduplication; repeated seeds or algorithms would only
/// overwrite their own metrics file with identical bytes.
fn dedupe<T: PartialEq + Copy>(items: Vec<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        if !out.contains(&item) {
            out.push(item);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedupe_preserves_first_occurrence_order() {
        assert_eq!(dedupe(vec![3u64, 1, 3, 2, 1]), vec![3, 1, 2]);
        assert_eq!(dedupe(Vec::<u64>::new()), Vec::<u64>::new());
    }

    #[test]
    fn algorithm_names_parse_round_trip() {
        for algorithm in Algorithm::ALL {
            assert_eq!(parse_algorithm(algorithm.name()), Ok(algorithm));
        }
        assert!(parse_algorithm("simulated-annealing").is_err());
    }
}
