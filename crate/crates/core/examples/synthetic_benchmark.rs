//! Generates the default synthetic trial and runs the whole pipeline.
//!
//! cargo run --release -p agri-gnn --example synthetic_benchmark -- [seed] [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use agri_gnn::data::{generate_synthetic_trial, SyntheticConfig};
use agri_gnn::pipeline::{run_pipeline, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("agri-gnn-benchmark"));

    let start = Instant::now();
    let raw = generate_synthetic_trial(&SyntheticConfig::default(), seed)?;
    let cfg = PipelineConfig {
        train: agri_gnn::train::TrainConfig {
            seed,
            ..Default::default()
        },
        ..Default::default()
    };
    let report = run_pipeline(raw, &cfg, &out)?;
    println!(
        "nodes {} edges {} features {}",
        report.node_count, report.edge_count, report.preprocess.feature_count
    );
    println!(
        "gnn   test rmse {:.2} mae {:.2} r2 {:.4}",
        report.metrics.rmse, report.metrics.mae, report.metrics.r2
    );
    println!(
        "knn   k {} test rmse {:.2} r2 {:.4}",
        report.baseline.k, report.baseline.rmse, report.baseline.r2
    );
    println!("elapsed {:.1?} -> {}", start.elapsed(), out.display());
    Ok(())
}
