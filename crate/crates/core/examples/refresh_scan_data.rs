//! Regenerates the cached ground-truth lattice scan for the canonical
//! benchmark. Run from the workspace root after any change to the benchmark
//! config:
//!
//! ```text
//! cargo run --release -p ctrcbo --example refresh_scan_data
//! ```
//!
//! The acceptance suite recomputes the scan and fails if this file is stale.

use ctrcbo::config::ExperimentConfig;
use ctrcbo::sim::{grid_scan_certificate, Environment};

const GRID_PER_DIM: usize = 50;
const OUT_PATH: &str = "data/benchmark_3cohort_scan.json";

fn main() {
    let config: ExperimentConfig<f64> = ExperimentConfig::benchmark_3cohort();
    let env = Environment::from_experiment(&config);
    let certificate =
        grid_scan_certificate(&env, config.experiment.score_target, GRID_PER_DIM);
    assert!(
        certificate.score_margin >= 0.2,
        "benchmark must stay solvable with >= 0.2pp margin, got {}",
        certificate.score_margin
    );
    let json = serde_json::to_string_pretty(&certificate).expect("certificate serializes");
    std::fs::create_dir_all("data").expect("create data directory");
    std::fs::write(OUT_PATH, json + "\n").expect("write scan cache");
    println!(
        "wrote {OUT_PATH}: {} feasible lattice points, margin {:.4}pp",
        certificate.feasible_points, certificate.score_margin
    );
}
