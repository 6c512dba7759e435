//! One PASS/FAIL line per acceptance criterion; exits non-zero on any FAIL.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use agri_gnn::data::{generate_synthetic_trial, preprocess, SyntheticConfig};
use agri_gnn::graph::{
    build_genotype_edges, build_spatial_edges, pairwise_distances, DistanceMetric, EdgeMode,
    EdgeSet, SpatialOptions,
};
use agri_gnn::model::{AgriGnnModel, FinalActivation, Mode, ModelConfig};
use agri_gnn::pipeline::{build_graph, split_dataset, GraphConfig};
use agri_gnn::tensor::{finite_diff_check, Matrix, Tape};
use agri_gnn::train::{
    evaluate, hyper_grid_search, tsne_embed, write_grid_results_csv, HyperGrid, TrainConfig,
    TsneOptions,
};
use agri_gnn::vegindex::{catalog, compute_index, BandSpectrum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use common::spot::{flat_expected, spot, SPOT};
use common::{
    brute_genotype_edges, brute_global_edges, brute_per_node_edges, dense_neighbor_mean,
    permute_rows, random_graph, random_matrix, random_permutation,
};

type Check = Result<String, String>;

// Negated so that NaN fails the check.
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn model_config(p: usize, h: usize, dropout: f64) -> ModelConfig {
    ModelConfig {
        input_dim: p,
        hidden_channels: h,
        dropout_rate: dropout,
        final_activation: FinalActivation::Identity,
    }
}

fn gradient_check() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (g, _) = random_graph(&mut rng, 12, 0.25);
    let x = random_matrix(&mut rng, 12, 20);
    let y: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mask: Vec<usize> = (0..9).collect();
    let model = AgriGnnModel::init(model_config(20, 8, 0.3), 7).map_err(|e| e.to_string())?;
    let loss = |m: &AgriGnnModel| -> agri_gnn::Result<(f64, Vec<Matrix>)> {
        // A fixed dropout seed freezes the masks between evaluations.
        let f = m.forward(&x, &g, Mode::Train { dropout_seed: 11 })?;
        let mut tape = f.tape;
        let l = tape.masked_mse(f.prediction, &y, &mask)?;
        let v = tape.value(l).get(0, 0);
        Ok((v, tape.backward(l)?.into_params()))
    };
    let (_, analytic) = loss(&model).map_err(|e| e.to_string())?;
    let theta: Vec<Matrix> = model.params().into_iter().cloned().collect();
    let check = finite_diff_check(
        |p| Ok(loss(&model.with_params(p)?)?.0),
        &theta,
        &analytic,
        1e-5,
    )
    .map_err(|e| e.to_string())?;
    let t = start.elapsed();
    ensure!(
        check.max_rel_error < 1e-4,
        "max rel err {:e}",
        check.max_rel_error
    );
    ensure!(t < Duration::from_secs(10), "took {}", secs(t));
    Ok(format!(
        "max rel err {:.2e}, {}",
        check.max_rel_error,
        secs(t)
    ))
}

fn aggregation_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=20);
        let density = rng.random_range(0.0..0.6);
        let (g, edges) = random_graph(&mut rng, n, density);
        let h = random_matrix(&mut rng, n, 5);
        let mut tape = Tape::new();
        let hv = tape.leaf(h.clone());
        let m = tape.neighbor_mean(hv, &g).map_err(|e| e.to_string())?;
        worst = worst.max(
            tape.value(m)
                .max_abs_diff(&dense_neighbor_mean(n, &edges, &h)),
        );
    }
    ensure!(worst < 1e-12, "max |diff| {worst:e}");
    Ok(format!("max |diff| {worst:.1e}"))
}

fn edge_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pops = ["P1", "P2", "P3", "P4", "P5"];
    for inst in 0..50 {
        let coords: Vec<(f64, f64)> = (0..200)
            .map(|_| (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)))
            .collect();
        let labels: Vec<&str> = (0..200).map(|_| pops[rng.random_range(0..5)]).collect();
        let p = [1.0, 3.0, 5.0, 10.0][inst % 4];
        let d =
            pairwise_distances(&coords, DistanceMetric::Euclidean).map_err(|e| e.to_string())?;
        let set = |e: EdgeSet| -> BTreeSet<(usize, usize)> { e.iter().collect() };
        for closed in [false, true] {
            let opts = SpatialOptions {
                mode: EdgeMode::Global,
                percentile: p,
                closed,
            };
            let got = set(build_spatial_edges(&d, &opts).map_err(|e| e.to_string())?);
            ensure!(
                got == brute_global_edges(&coords, p, closed),
                "global mismatch, instance {inst}"
            );
        }
        let opts = SpatialOptions {
            mode: EdgeMode::PerNode,
            percentile: p,
            closed: false,
        };
        let got = set(build_spatial_edges(&d, &opts).map_err(|e| e.to_string())?);
        ensure!(
            got == brute_per_node_edges(&coords, p),
            "per-node mismatch, instance {inst}"
        );
        ensure!(
            set(build_genotype_edges(&labels)) == brute_genotype_edges(&labels),
            "genotype mismatch, instance {inst}"
        );
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(30), "took {}", secs(t));
    Ok(format!("50 instances, {}", secs(t)))
}

fn vegetation_indices() -> Check {
    ensure!(
        catalog().len() == 52,
        "catalog has {} entries",
        catalog().len()
    );
    let s = BandSpectrum::from_fn((400..=1000).map(f64::from), spot).map_err(|e| e.to_string())?;
    for (name, expected) in SPOT {
        let v = compute_index(name, &s).map_err(|e| e.to_string())?;
        ensure!(
            (v - expected).abs() < 1e-10,
            "{name} spot {v} vs {expected}"
        );
    }
    for r in [0.05, 0.3, 0.7] {
        let flat = BandSpectrum::flat(r);
        for def in catalog() {
            let v = compute_index(def.name, &flat).map_err(|e| e.to_string())?;
            let e = flat_expected(def.name, r);
            let ok = if e.is_nan() {
                v.is_nan()
            } else {
                (v - e).abs() < 1e-10
            };
            ensure!(ok, "{} flat({r}) = {v}, expected {e}", def.name);
        }
    }
    Ok("52 spot values, flat spectra at 3 levels".into())
}

fn agri(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_agri-gnn"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    Ok(())
}

fn json_field(path: &Path, key: &str) -> Result<f64, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    v[key]
        .as_f64()
        .ok_or_else(|| format!("{key} missing in {}", path.display()))
}

fn benchmark(out: &Path) -> Check {
    let start = Instant::now();
    agri(&["pipeline", "--seed", "0", "--out", out.to_str().unwrap()])?;
    let t = start.elapsed();
    let rows = csv::Reader::from_path(out.join("plots.csv"))
        .map_err(|e| e.to_string())?
        .records()
        .count();
    let r2 = json_field(&out.join("metrics.json"), "r2")?;
    let knn = json_field(&out.join("baseline_metrics.json"), "r2")?;
    let detail = format!("{rows} plots, r2 {r2:.4}, K-NN r2 {knn:.4}, {}", secs(t));
    ensure!(rows == 3161, "{detail}");
    ensure!(t < Duration::from_secs(300), "{detail}");
    ensure!(r2 >= 0.70, "{detail}");
    ensure!(r2 - knn >= 0.10, "{detail}");
    Ok(detail)
}

fn determinism(first: &Path, second: &Path) -> Check {
    agri(&["pipeline", "--seed", "0", "--out", second.to_str().unwrap()])?;
    for f in ["metrics.json", "loss_history.csv", "model.json"] {
        let a = std::fs::read(first.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(second.join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure!(a == b, "{f} differs between runs");
    }
    Ok("metrics.json, loss_history.csv, model.json identical".into())
}

fn metric_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000 {
        let n = rng.random_range(2..100);
        let target: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let mask: Vec<usize> = (0..n).collect();
        let mean = target.iter().sum::<f64>() / n as f64;
        let m = evaluate(&pred, &target, &mask).map_err(|e| e.to_string())?;
        ensure!(
            m.rmse >= m.mae - 1e-10,
            "vector {i}: rmse {} < mae {}",
            m.rmse,
            m.mae
        );
        let exact = evaluate(&target, &target, &mask).map_err(|e| e.to_string())?;
        ensure!(
            (exact.r2 - 1.0).abs() < 1e-10,
            "vector {i}: r2(target) {}",
            exact.r2
        );
        let flat = evaluate(&vec![mean; n], &target, &mask).map_err(|e| e.to_string())?;
        ensure!(flat.r2.abs() < 1e-10, "vector {i}: r2(mean) {}", flat.r2);
    }
    Ok("1000 vectors".into())
}

fn permutation_equivariance() -> Check {
    let mut worst = 0.0f64;
    for inst in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + inst);
        let n = rng.random_range(5..40);
        let (g, _) = random_graph(&mut rng, n, 0.15);
        let x = random_matrix(&mut rng, n, 8);
        let model = AgriGnnModel::init(model_config(8, 6, 0.3), inst).map_err(|e| e.to_string())?;
        let perm = random_permutation(&mut rng, n);
        let base = model.predict(&x, &g).map_err(|e| e.to_string())?;
        let pg = g.permuted(&perm).map_err(|e| e.to_string())?;
        let moved = model
            .predict(&permute_rows(&x, &perm), &pg)
            .map_err(|e| e.to_string())?;
        for i in 0..n {
            worst = worst.max((moved[perm[i]] - base[i]).abs());
        }
    }
    ensure!(worst < 1e-10, "max |diff| {worst:e}");
    Ok(format!("max |diff| {worst:.1e}"))
}

fn tsne_objective() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut data = Vec::new();
    let label: Vec<usize> = (0..150).map(|i| i % 3).collect();
    for &c in &label {
        for d in 0..16 {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(if d == c { 6.0 } else { 0.0 } + z);
        }
    }
    let x = Matrix::from_vec(150, 16, data).map_err(|e| e.to_string())?;
    let res = tsne_embed(&x, &TsneOptions::default()).map_err(|e| e.to_string())?;
    let means: Vec<f64> = res
        .kl_history
        .chunks(50)
        .map(|w| w.iter().map(|p| p.1).sum::<f64>() / w.len() as f64)
        .collect();
    for (i, w) in means.windows(2).enumerate() {
        ensure!(
            w[1] <= w[0] + 1e-3,
            "window {} KL {} after {}",
            i + 1,
            w[1],
            w[0]
        );
    }
    let (mut intra, mut inter, mut ni, mut ne) = (0.0, 0.0, 0.0, 0.0);
    let y = &res.coords;
    for i in 0..150 {
        for j in i + 1..150 {
            let d =
                ((y.get(i, 0) - y.get(j, 0)).powi(2) + (y.get(i, 1) - y.get(j, 1)).powi(2)).sqrt();
            if label[i] == label[j] {
                intra += d;
                ni += 1.0;
            } else {
                inter += d;
                ne += 1.0;
            }
        }
    }
    let (intra, inter) = (intra / ni, inter / ne);
    ensure!(intra < inter, "intra {intra} >= inter {inter}");
    Ok(format!(
        "{} windows, final KL {:.4}, intra {intra:.2} < inter {inter:.2}",
        means.len(),
        res.final_kl
    ))
}

fn grid_harness(dir: &Path) -> Check {
    let start = Instant::now();
    let cfg = SyntheticConfig {
        plots_per_field: vec![100, 100],
        ..SyntheticConfig::default()
    };
    let raw = generate_synthetic_trial(&cfg, 1).map_err(|e| e.to_string())?;
    let (ds, _) = preprocess(raw).map_err(|e| e.to_string())?;
    ensure!(ds.len() == 200, "{} nodes", ds.len());
    let g = build_graph(&ds, &GraphConfig::default()).map_err(|e| e.to_string())?;
    let base = TrainConfig {
        epochs: 60,
        seed: 1,
        ..TrainConfig::default()
    };
    let split = split_dataset(&ds, &base).map_err(|e| e.to_string())?;
    let res = hyper_grid_search(
        &ds.feature_matrix(),
        &ds.target,
        &g,
        &split,
        &HyperGrid::default(),
        &base,
        ds.feature_names(),
    )
    .map_err(|e| e.to_string())?;
    let path = dir.join("grid_results.csv");
    write_grid_results_csv(&res.cells, &path).map_err(|e| e.to_string())?;

    let mut best: Option<(usize, f64)> = None;
    let mut rows = 0;
    for (i, rec) in csv::Reader::from_path(&path)
        .map_err(|e| e.to_string())?
        .records()
        .enumerate()
    {
        let rec = rec.map_err(|e| e.to_string())?;
        let rmse: f64 = rec[3]
            .parse()
            .map_err(|_| format!("bad rmse {:?}", &rec[3]))?;
        if best.is_none_or(|(_, b)| rmse < b) {
            best = Some((i, rmse));
        }
        rows += 1;
    }
    ensure!(rows == 36, "{rows} grid rows");
    let (argmin, rmse) = best.ok_or("empty grid file")?;
    ensure!(
        argmin == res.best,
        "csv argmin {argmin} vs reported {}",
        res.best
    );
    let c = &res.cells[argmin];
    ensure!(
        res.best_config.learning_rate == c.learning_rate
            && res.best_config.hidden_channels == c.hidden_channels
            && res.best_config.dropout_rate == c.dropout_rate,
        "best config does not match its cell"
    );
    Ok(format!(
        "36 cells x {} epochs, best lr {} hidden {} dropout {} (rmse {rmse:.2}), {}",
        base.epochs,
        c.learning_rate,
        c.hidden_channels,
        c.dropout_rate,
        secs(start.elapsed())
    ))
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into()))
    });
    match outcome {
        Ok(detail) => {
            println!("PASS {id:>2} {name}: {detail}");
            true
        }
        Err(why) => {
            println!("FAIL {id:>2} {name}: {why}");
            false
        }
    }
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let (first, second) = (dir.path().join("run1"), dir.path().join("run2"));
    let results = [
        run(1, "gradient check", gradient_check),
        run(2, "aggregation oracle", aggregation_oracle),
        run(3, "edge construction oracle", edge_oracle),
        run(4, "vegetation index suite", vegetation_indices),
        run(5, "synthetic benchmark", || benchmark(&first)),
        run(6, "determinism", || determinism(&first, &second)),
        run(7, "metric identities", metric_identities),
        run(8, "permutation equivariance", permutation_equivariance),
        run(9, "t-SNE objective", tsne_objective),
        run(10, "hyperparameter grid", || grid_harness(dir.path())),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
