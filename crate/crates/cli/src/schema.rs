//! On-disk artifact schema: metrics rows, the run manifest, the cross-seed
//! summary, and the comparison report.
//!
//! Every serialized shape the binary reads or writes lives here so the file
//! formats stay stable in one place. Floats are printed with Rust's shortest
//! round-trip formatting and parsed with correctly rounded parsers, so a
//! write/read cycle reproduces every value bit for bit and identical runs
//! produce byte-identical files.

use std::collections::BTreeMap;

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use ctrcbo::Run;
use serde::{Deserialize, Serialize};

/// `cohort_id` value of the volume-weighted platform aggregate rows.
pub const PLATFORM_ID: &str = "platform";

/// Manifest file name inside a run directory.
pub const MANIFEST_FILE: &str = "manifest.json";
/// Summary file name inside a run directory.
pub const SUMMARY_FILE: &str = "summary.json";
/// Report file name inside a comparison directory.
pub const REPORT_FILE: &str = "report.json";

/// Metrics file encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Metrics file name for one `(algorithm, seed)` run.
pub fn metrics_filename(algorithm: &str, seed: u64, format: OutputFormat) -> String {
    format!("{algorithm}_seed{seed:05}.{}", format.extension())
}

/// Plot-data file name for one algorithm.
pub fn plot_filename(algorithm: &str) -> String {
    format!("plot_{algorithm}.csv")
}

/// One metrics record. Each executed step emits one row per cohort (in
/// config order, `cohort_id` = the cohort's numeric id) followed by one
/// platform aggregate row (`cohort_id` = `"platform"`). The multiplier
/// vector and the convergence flag are step-level and repeat on every row of
/// the step; the trust-region edge length applies to cohort rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// 1-based step index.
    pub step: usize,
    pub cohort_id: String,
    pub score_delta_pct: f64,
    pub impressions_delta_pct: f64,
    /// Dual multipliers after this step's ascent update, one per constraint.
    pub lambda: Vec<f64>,
    /// Trust-region edge length at selection time; absent on platform rows.
    pub tr_length: Option<f64>,
    /// True once convergence has been declared at or before this step.
    pub converged_flag: bool,
}

/// Flattens one finished run into metrics rows.
///
/// `cohort_ids` are the numeric cohort ids in config order; they must line
/// up with the per-cohort vectors inside the run.
pub fn rows_from_result(result: &Run, cohort_ids: &[usize]) -> Vec<MetricsRow> {
    let mut rows = Vec::with_capacity(result.steps.len() * (cohort_ids.len() + 1));
    for step in &result.steps {
        debug_assert_eq!(step.per_cohort.len(), cohort_ids.len());
        for (k, pair) in step.per_cohort.iter().enumerate() {
            rows.push(MetricsRow {
                step: step.step,
                cohort_id: cohort_ids[k].to_string(),
                score_delta_pct: pair.score_delta,
                impressions_delta_pct: pair.impressions_delta,
                lambda: step.lambda.clone(),
                tr_length: Some(step.region_lengths[k]),
                converged_flag: step.converged_flag,
            });
        }
        rows.push(MetricsRow {
            step: step.step,
            cohort_id: PLATFORM_ID.to_string(),
            score_delta_pct: step.platform.score_delta,
            impressions_delta_pct: step.platform.impressions_delta,
            lambda: step.lambda.clone(),
            tr_length: None,
            converged_flag: step.converged_flag,
        });
    }
    rows
}

/// Fixed CSV column names for `constraints` dual-multiplier columns.
pub fn csv_header(constraints: usize) -> String {
    let mut columns = vec![
        "step".to_string(),
        "cohort_id".to_string(),
        "score_delta_pct".to_string(),
        "impressions_delta_pct".to_string(),
    ];
    for i in 1..=constraints {
        columns.push(format!("lambda_{i}"));
    }
    columns.push("tr_length".to_string());
    columns.push("converged_flag".to_string());
    columns.join(",")
}

fn fmt_f64(value: f64) -> String {
    format!("{value}")
}

fn csv_line(row: &MetricsRow) -> String {
    let mut fields = Vec::with_capacity(6 + row.lambda.len());
    fields.push(row.step.to_string());
    fields.push(row.cohort_id.clone());
    fields.push(fmt_f64(row.score_delta_pct));
    fields.push(fmt_f64(row.impressions_delta_pct));
    fields.extend(row.lambda.iter().copied().map(fmt_f64));
    fields.push(row.tr_length.map(fmt_f64).unwrap_or_default());
    fields.push(row.converged_flag.to_string());
    fields.join(",")
}

/// Encodes rows in the requested format. CSV values never need quoting:
/// every field is a number, a boolean, a numeric cohort id, or the literal
/// `"platform"`.
pub fn encode_rows(rows: &[MetricsRow], format: OutputFormat) -> Result<String> {
    ensure!(!rows.is_empty(), "a metrics file needs at least one row");
    let constraints = rows[0].lambda.len();
    for row in rows {
        ensure!(
            row.lambda.len() == constraints,
            "inconsistent multiplier count across rows"
        );
        ensure!(
            !row.cohort_id.is_empty() && !row.cohort_id.contains([',', '\n']),
            "cohort id {:?} cannot be written to CSV",
            row.cohort_id
        );
    }
    match format {
        OutputFormat::Csv => {
            let mut out = csv_header(constraints);
            out.push('\n');
            for row in rows {
                out.push_str(&csv_line(row));
                out.push('\n');
            }
            Ok(out)
        }
        OutputFormat::Json => {
            let mut out = serde_json::to_string_pretty(rows)?;
            out.push('\n');
            Ok(out)
        }
    }
}

/// Decodes a metrics file produced by [`encode_rows`].
pub fn decode_rows(text: &str, format: OutputFormat) -> Result<Vec<MetricsRow>> {
    match format {
        OutputFormat::Csv => decode_csv(text),
        OutputFormat::Json => serde_json::from_str(text).context("parsing JSON metrics rows"),
    }
}

fn decode_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
    let header = lines.next().unwrap_or("");
    let columns: Vec<&str> = header.split(',').collect();
    ensure!(
        columns.len() >= 7
            && columns[..4] == ["step", "cohort_id", "score_delta_pct", "impressions_delta_pct"]
            && columns[columns.len() - 2..] == ["tr_length", "converged_flag"],
        "unrecognized metrics header {header:?}"
    );
    let constraints = columns.len() - 6;
    for (i, name) in columns[4..4 + constraints].iter().enumerate() {
        ensure!(
            *name == format!("lambda_{}", i + 1),
            "unrecognized metrics header {header:?}"
        );
    }

    let mut rows = Vec::new();
    for (index, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row = parse_csv_row(line, constraints)
            .with_context(|| format!("metrics line {}", index + 2))?;
        rows.push(row);
    }
    Ok(rows)
}

fn parse_csv_row(line: &str, constraints: usize) -> Result<MetricsRow> {
    let fields: Vec<&str> = line.split(',').collect();
    let expected = 6 + constraints;
    ensure!(
        fields.len() == expected,
        "expected {expected} fields, found {}",
        fields.len()
    );
    let float = |field: &str, name: &str| -> Result<f64> {
        field
            .parse::<f64>()
            .with_context(|| format!("field {name} ({field:?})"))
    };
    let lambda = fields[4..4 + constraints]
        .iter()
        .enumerate()
        .map(|(i, f)| float(f, &format!("lambda_{}", i + 1)))
        .collect::<Result<Vec<f64>>>()?;
    let tr_field = fields[expected - 2];
    let tr_length = if tr_field.is_empty() {
        None
    } else {
        Some(float(tr_field, "tr_length")?)
    };
    let converged_flag = match fields[expected - 1] {
        "true" => true,
        "false" => false,
        other => bail!("field converged_flag ({other:?})"),
    };
    Ok(MetricsRow {
        step: fields[0].parse().context("field step")?,
        cohort_id: fields[1].to_string(),
        score_delta_pct: float(fields[2], "score_delta_pct")?,
        impressions_delta_pct: float(fields[3], "impressions_delta_pct")?,
        lambda,
        tr_length,
        converged_flag,
    })
}

/// What a run directory was produced from. The exact config text is embedded
/// so comparisons can check two run sets really ran the same experiment
/// without the original file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Config path as given on the command line (traceability only).
    pub config_path: String,
    /// Algorithm short names in execution order.
    pub algorithms: Vec<String>,
    pub seeds: Vec<u64>,
    pub format: OutputFormat,
    /// Exact text of the config file the runs used.
    pub config_toml: String,
}

/// Cross-seed medians for one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub runs: usize,
    pub converged_runs: usize,
    /// `null` when the median seed never converged.
    pub median_steps_to_convergence: Option<f64>,
    /// Per-constraint median of the run-long time-averaged violation.
    pub median_final_time_average_violation: Vec<f64>,
    pub median_final_platform_score_delta_pct: f64,
    pub median_final_platform_impressions_delta_pct: f64,
}

/// `summary.json`: cross-seed medians per algorithm, keyed by short name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub algorithms: BTreeMap<String, AlgorithmSummary>,
}

/// Convergence distribution of one algorithm inside one run directory.
///
/// A seed that never converged has no finite step count, so it turns `max`
/// (and `min`/`median` when no or too few seeds converged) into `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectoryStats {
    pub directory: String,
    pub runs: usize,
    pub converged_runs: usize,
    pub min_steps_to_convergence: Option<usize>,
    pub median_steps_to_convergence: Option<f64>,
    pub max_steps_to_convergence: Option<usize>,
    /// Per-constraint median (across seeds) of the time-averaged violation
    /// over each run's executed steps.
    pub median_time_average_violation: Vec<f64>,
}

/// One algorithm's comparison across directories, aligned with
/// [`CompareReport::directories`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmComparison {
    pub per_directory: Vec<DirectoryStats>,
    /// Median steps-to-convergence minus the first directory's median;
    /// `null` where either median is undefined.
    pub median_steps_delta_vs_first: Vec<Option<f64>>,
}

/// `report.json`: the full comparison, keyed by algorithm short name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// Directory labels in argument order (basenames, deduplicated).
    pub directories: Vec<String>,
    pub horizon: usize,
    pub algorithms: BTreeMap<String, AlgorithmComparison>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ctrcbo::acquisition::pareto::ObjectivePair;
    use ctrcbo::optimizer::{Algorithm, ObservationLog, RunResult, StepMetrics};

    fn sample_rows() -> Vec<MetricsRow> {
        vec![
            MetricsRow {
                step: 1,
                cohort_id: "0".to_string(),
                score_delta_pct: 0.1 + 0.2,
                impressions_delta_pct: -2.5e-7,
                lambda: vec![1.0 / 3.0],
                tr_length: Some(0.4),
                converged_flag: false,
            },
            MetricsRow {
                step: 1,
                cohort_id: PLATFORM_ID.to_string(),
                score_delta_pct: f64::MIN_POSITIVE,
                impressions_delta_pct: 12345.678901234567,
                lambda: vec![0.0],
                tr_length: None,
                converged_flag: true,
            },
        ]
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = sample_rows();
        let text = encode_rows(&rows, OutputFormat::Csv).unwrap();
        assert_eq!(decode_rows(&text, OutputFormat::Csv).unwrap(), rows);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let rows = sample_rows();
        let text = encode_rows(&rows, OutputFormat::Json).unwrap();
        assert_eq!(decode_rows(&text, OutputFormat::Json).unwrap(), rows);
    }

    #[test]
    fn header_has_documented_columns() {
        assert_eq!(
            csv_header(2),
            "step,cohort_id,score_delta_pct,impressions_delta_pct,lambda_1,lambda_2,tr_length,converged_flag"
        );
        let text = encode_rows(&sample_rows(), OutputFormat::Csv).unwrap();
        assert!(text.starts_with(&csv_header(1)));
        // The platform row leaves tr_length blank between the commas.
        assert!(text.lines().nth(2).unwrap().contains(",,true"));
    }

    #[test]
    fn decode_rejects_foreign_headers_and_bad_fields() {
        assert!(decode_csv("step,cohort\n").is_err());
        assert!(decode_csv("step,cohort_id,score_delta_pct,impressions_delta_pct,lambda_1,tr_length,converged_flag\n1,0,0.0,0.0,0.0,0.4,yes\n").is_err());
        assert!(decode_csv("step,cohort_id,score_delta_pct,impressions_delta_pct,lambda_1,tr_length,converged_flag\n1,0,0.0,0.0\n").is_err());
    }

    #[test]
    fn run_flattens_to_cohort_rows_then_platform_row() {
        let step = StepMetrics {
            step: 1,
            per_cohort: vec![
                ObjectivePair { score_delta: 1.0, impressions_delta: 2.0 },
                ObjectivePair { score_delta: 3.0, impressions_delta: 4.0 },
            ],
            platform: ObjectivePair { score_delta: 2.0, impressions_delta: 3.0 },
            weighted_violation: vec![1.5],
            lambda: vec![0.25],
            region_lengths: vec![0.4, 0.2],
            converged_flag: false,
        };
        let result = RunResult {
            algorithm: Algorithm::Ctrcbo,
            seed: 7,
            converged: false,
            steps_to_convergence: None,
            final_time_average_violation: vec![1.5],
            regret_proxy: 0.0,
            average_regret_at: vec![(1, 0.0)],
            steps: vec![step],
            log: ObservationLog {
                per_cohort: vec![Vec::new(), Vec::new()],
                dual_trajectory: vec![vec![0.25]],
                region_lengths: vec![vec![0.4, 0.2]],
                weighted_violations: vec![vec![1.5]],
            },
        };
        let rows = rows_from_result(&result, &[0, 7]);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].cohort_id, "0");
        assert_eq!(rows[0].tr_length, Some(0.4));
        assert_eq!(rows[1].cohort_id, "7");
        assert_eq!(rows[1].tr_length, Some(0.2));
        assert_eq!(rows[2].cohort_id, PLATFORM_ID);
        assert_eq!(rows[2].tr_length, None);
        assert_eq!(rows[2].score_delta_pct, 2.0);
        assert!(rows.iter().all(|r| r.step == 1 && r.lambda == vec![0.25]));
    }

    #[test]
    fn filenames_are_stable() {
        assert_eq!(
            metrics_filename("ctrcbo", 1, OutputFormat::Csv),
            "ctrcbo_seed00001.csv"
        );
        assert_eq!(
            metrics_filename("cbo", 12345, OutputFormat::Json),
            "cbo_seed12345.json"
        );
        assert_eq!(plot_filename("random"), "plot_random.csv");
    }
}
