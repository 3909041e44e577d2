//! `compare`: read two or more completed run directories, check they ran the
//! same experiment, and emit convergence statistics plus plot-ready data.
//!
//! The first directory is the baseline: median steps-to-convergence deltas
//! are reported relative to it. Statistics are recomputed from the metrics
//! rows rather than trusted from each directory's summary, so a report is
//! exactly as good as the row data it points at.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use clap::Args;
use ctrcbo::Config;

use crate::output::OutputWriter;
use crate::schema::{
    self, AlgorithmComparison, CompareReport, DirectoryStats, MetricsRow, RunManifest,
    REPORT_FILE,
};
use crate::stats;

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Completed run directories (at least two; the first is the baseline).
    #[arg(required = true, num_args = 2.., value_name = "DIR")]
    pub dirs: Vec<PathBuf>,

    /// Directory the comparison report and plot files are written to.
    #[arg(long, env = "CTRCBO_OUT", value_name = "DIR")]
    pub out: PathBuf,
}

/// Platform aggregate of one executed step, as read back from a metrics file.
struct PlatformStep {
    step: usize,
    score_delta_pct: f64,
    impressions_delta_pct: f64,
    converged: bool,
}

/// One seed's platform trajectory.
struct LoadedRun {
    steps: Vec<PlatformStep>,
}

impl LoadedRun {
    fn convergence_step(&self) -> Option<usize> {
        self.steps.iter().find(|s| s.converged).map(|s| s.step)
    }

    fn time_average_violation(&self, budget: f64) -> f64 {
        let total: f64 = self
            .steps
            .iter()
            .map(|s| s.impressions_delta_pct - budget)
            .sum();
        total / self.steps.len() as f64
    }

    /// Running best feasible platform score: `None` until the first step
    /// whose platform impressions meet every budget.
    fn running_best_feasible(&self, budgets: &[f64]) -> Vec<Option<f64>> {
        let mut best: Option<f64> = None;
        self.steps
            .iter()
            .map(|s| {
                if budgets.iter().all(|&b| s.impressions_delta_pct <= b) {
                    best = Some(best.map_or(s.score_delta_pct, |b| b.max(s.score_delta_pct)));
                }
                best
            })
            .collect()
    }
}

/// One run directory: its config plus every run's platform trajectory, in
/// manifest order.
struct LoadedDir {
    label: String,
    config: Config,
    algorithms: Vec<String>,
    runs: Vec<Vec<LoadedRun>>,
}

pub fn execute(args: CompareArgs) -> Result<()> {
    let labels = dir_labels(&args.dirs);
    let mut dirs = Vec::with_capacity(args.dirs.len());
    for (path, label) in args.dirs.iter().zip(&labels) {
        let dir = load_dir(path, label.clone())
            .with_context(|| format!("loading run directory {}", path.display()))?;
        dirs.push(dir);
    }

    let first = &dirs[0];
    for dir in &dirs[1..] {
        ensure!(
            dir.config == first.config,
            "run directories used different experiment configs: {} vs {}",
            first.label,
            dir.label
        );
        ensure!(
            dir.algorithms == first.algorithms,
            "run directories hold different algorithm sets: {} ran [{}], {} ran [{}]",
            first.label,
            first.algorithms.join(", "),
            dir.label,
            dir.algorithms.join(", ")
        );
    }

    let budgets: Vec<f64> = first.config.experiment.impression_budgets.clone();
    let report = build_report(&dirs, &labels, &budgets);
    let plots: Vec<(String, String)> = first
        .algorithms
        .iter()
        .enumerate()
        .map(|(a, algorithm)| (schema::plot_filename(algorithm), plot_csv(&dirs, a, &budgets)))
        .collect();

    let mut writer = OutputWriter::create(&args.out)?;
    let written = (|| -> Result<()> {
        writer.write(REPORT_FILE, &(serde_json::to_string_pretty(&report)? + "\n"))?;
        for (name, contents) in &plots {
            writer.write(name, contents)?;
        }
        Ok(())
    })();
    if let Err(err) = written {
        writer.discard();
        return Err(err);
    }

    render(&report);
    println!(
        "wrote {REPORT_FILE} and {} plot files to {}",
        plots.len(),
        args.out.display()
    );
    Ok(())
}

fn build_report(dirs: &[LoadedDir], labels: &[String], budgets: &[f64]) -> CompareReport {
    let first = &dirs[0];
    let mut algorithms = std::collections::BTreeMap::new();
    for (a, algorithm) in first.algorithms.iter().enumerate() {
        let per_directory: Vec<DirectoryStats> = dirs
            .iter()
            .map(|dir| directory_stats(dir, a, budgets))
            .collect();
        let baseline = per_directory[0].median_steps_to_convergence;
        let median_steps_delta_vs_first = per_directory
            .iter()
            .map(|s| match (s.median_steps_to_convergence, baseline) {
                (Some(median), Some(base)) => Some(median - base),
                _ => None,
            })
            .collect();
        algorithms.insert(
            algorithm.clone(),
            AlgorithmComparison {
                per_directory,
                median_steps_delta_vs_first,
            },
        );
    }
    CompareReport {
        directories: labels.to_vec(),
        horizon: first.config.experiment.horizon,
        algorithms,
    }
}

fn directory_stats(dir: &LoadedDir, algorithm_index: usize, budgets: &[f64]) -> DirectoryStats {
    let runs = &dir.runs[algorithm_index];
    let steps: Vec<Option<usize>> = runs.iter().map(|r| r.convergence_step()).collect();
    let median_time_average_violation = budgets
        .iter()
        .map(|&budget| {
            let per_seed: Vec<f64> = runs
                .iter()
                .map(|r| r.time_average_violation(budget))
                .collect();
            stats::median_f64(&per_seed).expect("run directories hold at least one seed")
        })
        .collect();
    DirectoryStats {
        directory: dir.label.clone(),
        runs: runs.len(),
        converged_runs: steps.iter().filter(|s| s.is_some()).count(),
        min_steps_to_convergence: stats::min_steps(&steps),
        median_steps_to_convergence: stats::median_steps(&steps),
        max_steps_to_convergence: stats::max_steps(&steps),
        median_time_average_violation,
    }
}

/// Plot data for one algorithm: per step, the median (across each
/// directory's seeds) of the running best feasible platform score. Cells are
/// empty until at least one seed has seen a feasible step; runs that ended
/// early (stop-at-convergence) carry their final best forward.
fn plot_csv(dirs: &[LoadedDir], algorithm_index: usize, budgets: &[f64]) -> String {
    let grid = dirs
        .iter()
        .flat_map(|d| d.runs[algorithm_index].iter())
        .map(|r| r.steps.last().map_or(0, |s| s.step))
        .max()
        .unwrap_or(0);
    let curves: Vec<Vec<Vec<Option<f64>>>> = dirs
        .iter()
        .map(|d| {
            d.runs[algorithm_index]
                .iter()
                .map(|r| r.running_best_feasible(budgets))
                .collect()
        })
        .collect();

    let mut header = vec!["step".to_string()];
    header.extend(dirs.iter().map(|d| d.label.replace([',', '\n'], "_")));
    let mut out = header.join(",");
    out.push('\n');
    for step in 1..=grid {
        let mut fields = vec![step.to_string()];
        for per_dir in &curves {
            let values: Vec<f64> = per_dir
                .iter()
                .filter_map(|curve| value_at(curve, step))
                .collect();
            fields.push(stats::median_f64(&values).map_or_else(String::new, |m| format!("{m}")));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Value of a running-best curve at 1-based `step`, holding the final value
/// after the run's last executed step.
fn value_at(curve: &[Option<f64>], step: usize) -> Option<f64> {
    if curve.is_empty() {
        None
    } else if step <= curve.len() {
        curve[step - 1]
    } else {
        curve[curve.len() - 1]
    }
}

fn load_dir(path: &Path, label: String) -> Result<LoadedDir> {
    let manifest_path = path.join(schema::MANIFEST_FILE);
    let manifest_text = fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: RunManifest = serde_json::from_str(&manifest_text)
        .with_context(|| format!("parsing {}", manifest_path.display()))?;
    let config = Config::from_toml_str(&manifest.config_toml)
        .context("parsing the config embedded in the manifest")?;

    let mut runs = Vec::with_capacity(manifest.algorithms.len());
    for algorithm in &manifest.algorithms {
        let mut per_seed = Vec::with_capacity(manifest.seeds.len());
        for &seed in &manifest.seeds {
            let file = path.join(schema::metrics_filename(algorithm, seed, manifest.format));
            let text = fs::read_to_string(&file)
                .with_context(|| format!("reading {}", file.display()))?;
            let rows = schema::decode_rows(&text, manifest.format)
                .with_context(|| format!("parsing {}", file.display()))?;
            per_seed.push(platform_trajectory(rows)?);
        }
        runs.push(per_seed);
    }
    Ok(LoadedDir {
        label,
        config,
        algorithms: manifest.algorithms,
        runs,
    })
}

fn platform_trajectory(rows: Vec<MetricsRow>) -> Result<LoadedRun> {
    let mut steps: Vec<PlatformStep> = rows
        .into_iter()
        .filter(|r| r.cohort_id == schema::PLATFORM_ID)
        .map(|r| PlatformStep {
            step: r.step,
            score_delta_pct: r.score_delta_pct,
            impressions_delta_pct: r.impressions_delta_pct,
            converged: r.converged_flag,
        })
        .collect();
    ensure!(!steps.is_empty(), "metrics file holds no platform rows");
    steps.sort_by_key(|s| s.step);
    Ok(LoadedRun { steps })
}

/// Directory labels: basenames in argument order, deduplicated with a
/// numeric suffix so a directory compared against itself stays addressable.
fn dir_labels(dirs: &[PathBuf]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let base = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let mut label = base.clone();
        let mut suffix = 2;
        while labels.contains(&label) {
            label = format!("{base}_{suffix}");
            suffix += 1;
        }
        labels.push(label);
    }
    labels
}

fn render(report: &CompareReport) {
    println!(
        "compared {} run directories over horizon {}",
        report.directories.len(),
        report.horizon
    );
    for (algorithm, comparison) in &report.algorithms {
        println!("{algorithm}:");
        for (s, delta) in comparison
            .per_directory
            .iter()
            .zip(&comparison.median_steps_delta_vs_first)
        {
            let violations: Vec<String> = s
                .median_time_average_violation
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect();
            println!(
                "  {}: {}/{} converged, steps min/median/max = {}/{}/{}, \
                 median time-average violation = [{}], median steps delta vs {} = {}",
                s.directory,
                s.converged_runs,
                s.runs,
                stats::fmt_opt(s.min_steps_to_convergence),
                stats::fmt_opt(s.median_steps_to_convergence),
                stats::fmt_opt(s.max_steps_to_convergence),
                violations.join(", "),
                report.directories[0],
                stats::fmt_opt(*delta),
            );
        }
    }
}
