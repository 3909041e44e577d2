//! End-to-end tests that spawn the real binary and inspect its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

/// Fresh command for the built binary, scrubbed of ambient overrides.
fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ctrcbo"));
    for var in [
        "CTRCBO_CONFIG",
        "CTRCBO_SEEDS",
        "CTRCBO_ALGO",
        "CTRCBO_OUT",
        "CTRCBO_FORMAT",
    ] {
        cmd.env_remove(var);
    }
    cmd
}

fn run_ok(args: &[&str]) -> Output {
    let output = bin().args(args).output().expect("spawn ctrcbo");
    assert!(
        output.status.success(),
        "expected success for {args:?}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn run_err(args: &[&str]) -> Output {
    let output = bin().args(args).output().expect("spawn ctrcbo");
    assert!(
        output.status.code() == Some(1),
        "expected exit code 1 for {args:?}, got {:?}\nstdout:\n{}\nstderr:\n{}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

/// Two-cohort experiment small enough for fast end-to-end runs. With
/// `score_target = 0.05` and a generous budget every algorithm converges on
/// the first step; with `score_target = 1000.0` nothing ever converges.
fn tiny_config(horizon: usize, seeds: &[u64], score_target: f64) -> String {
    let seed_list = seeds
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        r#"[experiment]
constraint_count = 1
horizon = {horizon}
policy_dim = 2
score_target = {score_target:?}
impression_budgets = [50.0]
convergence_window = 1
seeds = [{seed_list}]
stop_at_convergence = false

[bounds]
lower = [0.0, 0.0]
upper = [1.0, 1.0]

[optimizer]
n_candidates = 8
beta = 1.0
epsilon = 0.05
eta = 1.0
noise_grid = [1e-2]
hyperparam_refresh_every = 50
hyperparam_selection_max_points = 40
fit_max_points = 40

[[optimizer.kernel_grid]]
kind = "rbf"
lengthscale = [1.0]
sigma_f2 = 1.0

[trust_region]
length_init = 0.4
length_min = 0.05
length_max = 1.0
tau_succ = 2
tau_fail = 3

[environment]
ar_rho = 0.5
ar_sigma = 0.2
context_dim = 2

[[environment.cohorts]]
id = 0
volume_weight = 0.5
saturation = 3.0
rate = 1.2
impression_gain = 2.0
noise_sd_score = 0.1
noise_sd_impressions = 0.1
context_sensitivity = [0.05, 0.2]
score_direction = [0.8, 0.6]
impression_direction = [0.5, 0.9]

[[environment.cohorts]]
id = 1
volume_weight = 0.5
saturation = 1.5
rate = 0.9
impression_gain = 2.4
noise_sd_score = 0.1
noise_sd_impressions = 0.1
context_sensitivity = [0.04, 0.15]
score_direction = [0.4, 0.9]
impression_direction = [0.7, 0.6]
"#
    )
}

fn write_config(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn path_str(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_lists_subcommands_and_env_prefix() {
    let output = run_ok(&["--help"]);
    let text = String::from_utf8_lossy(&output.stdout);
    for needle in ["run", "compare", "accept", "CTRCBO_"] {
        assert!(text.contains(needle), "--help misses {needle:?}:\n{text}");
    }
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let output = bin().args(["run"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn one_step_run_emits_rows_for_exactly_one_step() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "t1.toml", &tiny_config(1, &[1], 0.05));
    let out = tmp.path().join("out");
    run_ok(&[
        "run",
        "--config",
        path_str(&config),
        "--algo",
        "ctrcbo",
        "--out",
        path_str(&out),
    ]);

    let csv = fs::read_to_string(out.join("ctrcbo_seed00001.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "step,cohort_id,score_delta_pct,impressions_delta_pct,lambda_1,tr_length,converged_flag"
    );
    // One executed step: one row per cohort plus the platform aggregate.
    assert_eq!(lines.len(), 1 + 3, "unexpected rows:\n{csv}");
    for line in &lines[1..] {
        assert!(line.starts_with("1,"), "row not from step 1: {line}");
    }
    assert!(lines[1].starts_with("1,0,"));
    assert!(lines[2].starts_with("1,1,"));
    assert!(lines[3].starts_with("1,platform,"));
    // The platform row has no trust-region length.
    assert!(lines[3].contains(",,"));
    assert!(out.join("manifest.json").exists());
    assert!(out.join("summary.json").exists());
}

#[test]
fn identical_invocations_write_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "easy.toml", &tiny_config(6, &[1, 2], 0.05));
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        run_ok(&[
            "run",
            "--config",
            path_str(&config),
            "--algo",
            "ctrcbo,cbo",
            "--out",
            path_str(out),
        ]);
    }

    let mut names: Vec<String> = fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "cbo_seed00001.csv",
            "cbo_seed00002.csv",
            "ctrcbo_seed00001.csv",
            "ctrcbo_seed00002.csv",
            "manifest.json",
            "summary.json",
        ]
    );
    for name in &names {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical invocations");
    }
}

#[test]
fn summary_holds_cross_seed_medians_for_every_algorithm() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "easy.toml", &tiny_config(8, &[1, 2, 3], 0.05));
    let out = tmp.path().join("out");
    run_ok(&["run", "--config", path_str(&config), "--out", path_str(&out)]);

    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["horizon"], 8);
    assert_eq!(summary["seeds"], serde_json::json!([1, 2, 3]));
    let algorithms = summary["algorithms"].as_object().unwrap();
    let names: Vec<&String> = algorithms.keys().collect();
    assert_eq!(names, ["cbo", "ctrcbo", "random"]);
    for (name, entry) in algorithms {
        assert_eq!(entry["runs"], 3, "{name}");
        assert_eq!(entry["converged_runs"], 3, "{name}");
        assert_eq!(entry["median_steps_to_convergence"], 1.0, "{name}");
        assert_eq!(
            entry["median_final_time_average_violation"]
                .as_array()
                .unwrap()
                .len(),
            1,
            "{name}"
        );
        assert!(entry["median_final_platform_score_delta_pct"].is_number());
    }
}

#[test]
fn environment_variables_mirror_flags_and_flags_win() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "t1.toml", &tiny_config(1, &[1], 0.05));
    let out = tmp.path().join("json_out");
    let output = bin()
        .args(["run", "--config", path_str(&config), "--out", path_str(&out)])
        .env("CTRCBO_FORMAT", "json")
        .env("CTRCBO_SEEDS", "5")
        .env("CTRCBO_ALGO", "random")
        .output()
        .unwrap();
    assert!(output.status.success());

    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["format"], "json");
    assert_eq!(manifest["seeds"], serde_json::json!([5]));
    assert_eq!(manifest["algorithms"], serde_json::json!(["random"]));

    let rows = read_json(&out.join("random_seed00005.json"));
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["step"], 1);
    assert_eq!(rows[0]["cohort_id"], "0");
    assert!(rows[0]["tr_length"].is_number());
    assert_eq!(rows[2]["cohort_id"], "platform");
    assert!(rows[2]["tr_length"].is_null());
    assert_eq!(rows[2]["lambda"].as_array().unwrap().len(), 1);

    // An explicit flag beats the environment override.
    let out_csv = tmp.path().join("csv_out");
    let output = bin()
        .args([
            "run",
            "--config",
            path_str(&config),
            "--out",
            path_str(&out_csv),
            "--format",
            "csv",
            "--algo",
            "random",
            "--seeds",
            "5",
        ])
        .env("CTRCBO_FORMAT", "json")
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(out_csv.join("random_seed00005.csv").exists());
}

#[test]
fn duplicate_seeds_and_algorithms_are_deduplicated() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "t1.toml", &tiny_config(1, &[1], 0.05));
    let out = tmp.path().join("out");
    run_ok(&[
        "run",
        "--config",
        path_str(&config),
        "--seeds",
        "3,3",
        "--algo",
        "ctrcbo,ctrcbo",
        "--out",
        path_str(&out),
    ]);
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["seeds"], serde_json::json!([3]));
    assert_eq!(manifest["algorithms"], serde_json::json!(["ctrcbo"]));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 3);
}

#[test]
fn comparing_a_run_set_with_itself_reports_zero_median_difference() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "easy.toml", &tiny_config(8, &[1, 2], 0.05));
    let run_dir = tmp.path().join("runs");
    run_ok(&[
        "run",
        "--config",
        path_str(&config),
        "--algo",
        "ctrcbo",
        "--out",
        path_str(&run_dir),
    ]);

    let cmp = tmp.path().join("cmp");
    let output = run_ok(&[
        "compare",
        path_str(&run_dir),
        path_str(&run_dir),
        "--out",
        path_str(&cmp),
    ]);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("runs"), "unexpected stdout:\n{stdout}");

    let report = read_json(&cmp.join("report.json"));
    assert_eq!(report["directories"], serde_json::json!(["runs", "runs_2"]));
    let ctrcbo = &report["algorithms"]["ctrcbo"];
    let per_directory = ctrcbo["per_directory"].as_array().unwrap();
    assert_eq!(per_directory.len(), 2);
    let mut second = per_directory[1].clone();
    second["directory"] = per_directory[0]["directory"].clone();
    assert_eq!(per_directory[0], second, "self-comparison stats differ");
    assert_eq!(
        ctrcbo["median_steps_delta_vs_first"],
        serde_json::json!([0.0, 0.0])
    );

    let plot = fs::read_to_string(cmp.join("plot_ctrcbo.csv")).unwrap();
    let mut lines = plot.lines();
    assert_eq!(lines.next(), Some("step,runs,runs_2"));
    let first_data = lines.next().unwrap();
    let cells: Vec<&str> = first_data.split(',').collect();
    assert_eq!(cells.len(), 3);
    assert_eq!(cells[1], cells[2], "self-comparison plot columns differ");
}

#[test]
fn run_set_without_convergence_reports_none_medians() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "hard.toml", &tiny_config(3, &[1, 2], 1000.0));
    let run_dir = tmp.path().join("runs");
    let output = run_ok(&[
        "run",
        "--config",
        path_str(&config),
        "--algo",
        "ctrcbo",
        "--out",
        path_str(&run_dir),
    ]);
    assert!(
        String::from_utf8_lossy(&output.stdout).contains("median steps to convergence = none"),
        "run stdout should render missing medians as none"
    );

    let summary = read_json(&run_dir.join("summary.json"));
    assert_eq!(summary["algorithms"]["ctrcbo"]["converged_runs"], 0);
    assert!(summary["algorithms"]["ctrcbo"]["median_steps_to_convergence"].is_null());

    let cmp = tmp.path().join("cmp");
    let output = run_ok(&[
        "compare",
        path_str(&run_dir),
        path_str(&run_dir),
        "--out",
        path_str(&cmp),
    ]);
    assert!(
        String::from_utf8_lossy(&output.stdout).contains("steps min/median/max = none/none/none"),
        "compare stdout should render missing statistics as none"
    );
    let report = read_json(&cmp.join("report.json"));
    let ctrcbo = &report["algorithms"]["ctrcbo"];
    for stats in ctrcbo["per_directory"].as_array().unwrap() {
        assert!(stats["min_steps_to_convergence"].is_null());
        assert!(stats["median_steps_to_convergence"].is_null());
        assert!(stats["max_steps_to_convergence"].is_null());
    }
    assert_eq!(
        ctrcbo["median_steps_delta_vs_first"],
        serde_json::json!([null, null])
    );
}

#[test]
fn invalid_config_exits_nonzero_and_leaves_no_partial_outputs() {
    let tmp = TempDir::new().unwrap();
    // Volume weights sum to 1.2, which the config validator rejects.
    let broken = tiny_config(4, &[1], 0.05).replace("volume_weight = 0.5", "volume_weight = 0.6");
    let config = write_config(tmp.path(), "broken.toml", &broken);
    let out = tmp.path().join("out");
    let output = run_err(&[
        "run",
        "--config",
        path_str(&config),
        "--out",
        path_str(&out),
    ]);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("invalid config"),
        "diagnostic missing from stderr:\n{stderr}"
    );
    assert!(!out.exists(), "failed run must not leave an output directory");
}

#[test]
fn comparing_runs_from_different_configs_fails() {
    let tmp = TempDir::new().unwrap();
    let config_a = write_config(tmp.path(), "a.toml", &tiny_config(4, &[1], 1000.0));
    let config_b = write_config(tmp.path(), "b.toml", &tiny_config(5, &[1], 1000.0));
    let dir_a = tmp.path().join("a_out");
    let dir_b = tmp.path().join("b_out");
    for (config, dir) in [(&config_a, &dir_a), (&config_b, &dir_b)] {
        run_ok(&[
            "run",
            "--config",
            path_str(config),
            "--algo",
            "ctrcbo",
            "--out",
            path_str(dir),
        ]);
    }

    let cmp = tmp.path().join("cmp");
    let output = run_err(&[
        "compare",
        path_str(&dir_a),
        path_str(&dir_b),
        "--out",
        path_str(&cmp),
    ]);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("different experiment configs"),
        "diagnostic missing from stderr:\n{stderr}"
    );
    assert!(!cmp.exists());
}

#[test]
fn comparing_runs_with_different_algorithm_sets_fails() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "t1.toml", &tiny_config(1, &[1], 1000.0));
    let dir_a = tmp.path().join("a_out");
    let dir_b = tmp.path().join("b_out");
    for (algo, dir) in [("ctrcbo", &dir_a), ("cbo", &dir_b)] {
        run_ok(&[
            "run",
            "--config",
            path_str(&config),
            "--algo",
            algo,
            "--out",
            path_str(dir),
        ]);
    }

    let cmp = tmp.path().join("cmp");
    let output = run_err(&[
        "compare",
        path_str(&dir_a),
        path_str(&dir_b),
        "--out",
        path_str(&cmp),
    ]);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("different algorithm sets"),
        "diagnostic missing from stderr:\n{stderr}"
    );
    assert!(!cmp.exists());
}

#[test]
fn compare_handles_json_run_directories() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "easy.toml", &tiny_config(4, &[1], 0.05));
    let dir_a = tmp.path().join("a_out");
    let dir_b = tmp.path().join("b_out");
    for dir in [&dir_a, &dir_b] {
        run_ok(&[
            "run",
            "--config",
            path_str(&config),
            "--algo",
            "ctrcbo",
            "--format",
            "json",
            "--out",
            path_str(dir),
        ]);
    }
    let cmp = tmp.path().join("cmp");
    run_ok(&[
        "compare",
        path_str(&dir_a),
        path_str(&dir_b),
        "--out",
        path_str(&cmp),
    ]);
    let report = read_json(&cmp.join("report.json"));
    assert_eq!(
        report["algorithms"]["ctrcbo"]["median_steps_delta_vs_first"],
        serde_json::json!([0.0, 0.0])
    );
}
