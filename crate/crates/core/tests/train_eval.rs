mod common;

use agri_gnn::data::{
    generate_synthetic_trial, split_train_test, SplitAssignment, SyntheticConfig,
};
use agri_gnn::pipeline::{run_pipeline, PipelineConfig};
use agri_gnn::tensor::Matrix;
use agri_gnn::train::{
    evaluate, hyper_grid_search, knn_grid_search, knn_predict, train, tsne_embed, HyperGrid,
    TrainConfig, TsneOptions,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use common::{random_graph, random_matrix, random_permutation};

fn brute_knn(train: &[(f64, f64)], y: &[f64], q: (f64, f64), k: usize) -> f64 {
    let mut d: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, p)| (((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt(), i))
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d[..k].iter().map(|&(_, i)| y[i]).sum::<f64>() / k as f64
}

fn random_coords(rng: &mut ChaCha8Rng, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
        .collect()
}

#[test]
fn knn_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let n = rng.random_range(5..60);
        let coords = random_coords(&mut rng, n);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let q = random_coords(&mut rng, 10);
        let k = rng.random_range(1..=n);
        let got = knn_predict(&coords, &y, &q, k).unwrap();
        for (g, &qq) in got.iter().zip(&q) {
            assert!((g - brute_knn(&coords, &y, qq, k)).abs() < 1e-9);
        }
    }
}

#[test]
fn knn_ignores_training_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let coords = random_coords(&mut rng, 40);
    let y: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..10.0)).collect();
    let q = random_coords(&mut rng, 15);
    let perm = random_permutation(&mut rng, 40);
    let mut pc = coords.clone();
    let mut py = y.clone();
    for (i, &p) in perm.iter().enumerate() {
        pc[p] = coords[i];
        py[p] = y[i];
    }
    for k in [1, 3, 7] {
        assert_eq!(
            knn_predict(&coords, &y, &q, k).unwrap(),
            knn_predict(&pc, &py, &q, k).unwrap()
        );
    }
}

#[test]
fn knn_grid_picks_min_cv_and_reports_test_at_that_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 120;
    let coords = random_coords(&mut rng, n);
    let y: Vec<f64> = coords
        .iter()
        .map(|&(a, b)| 10.0 * (3.0 * a).sin() + 5.0 * b + rng.random_range(-0.5..0.5))
        .collect();
    let split = split_train_test(&(0..n).collect::<Vec<_>>(), 0.8, 7).unwrap();
    let ks: Vec<usize> = (1..=20).collect();
    let s = knn_grid_search(&coords, &y, &split, &ks, 5, 7).unwrap();
    assert_eq!(s.cv_rmse.len(), ks.len());
    let best = s.cv_rmse.iter().fold(
        (0, f64::INFINITY),
        |acc, &(k, r)| if r < acc.1 { (k, r) } else { acc },
    );
    assert_eq!(s.k, best.0);

    let tc: Vec<_> = split.train.iter().map(|&i| coords[i]).collect();
    let ty: Vec<_> = split.train.iter().map(|&i| y[i]).collect();
    let qc: Vec<_> = split.test.iter().map(|&i| coords[i]).collect();
    let pred = knn_predict(&tc, &ty, &qc, s.k).unwrap();
    assert_eq!(pred, s.test_predictions);
    let mut full = vec![0.0; n];
    for (&i, &p) in split.test.iter().zip(&pred) {
        full[i] = p;
    }
    assert_eq!(evaluate(&full, &y, &split.test).unwrap(), s.test);
    assert_eq!(s, knn_grid_search(&coords, &y, &split, &ks, 5, 7).unwrap());
}

#[test]
fn knn_rejects_k_above_fold_size() {
    let coords = random_coords(&mut ChaCha8Rng::seed_from_u64(4), 10);
    let y = vec![1.0; 10];
    let split = split_train_test(&(0..10).collect::<Vec<_>>(), 0.8, 0).unwrap();
    assert!(knn_grid_search(&coords, &y, &split, &[8], 2, 0).is_err());
    assert!(knn_predict(&coords, &y, &coords, 11).is_err());
}

/// 150 points in three well separated Gaussian clusters of 10 dimensions.
fn clusters(seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..3)
        .map(|c| (0..10).map(|d| if d == c { 8.0 } else { 0.0 }).collect())
        .collect();
    let mut data = Vec::new();
    let mut label = Vec::new();
    for i in 0..150 {
        let c = i % 3;
        for &m in &centers[c] {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(m + z);
        }
        label.push(c);
    }
    (Matrix::from_vec(150, 10, data).unwrap(), label)
}

fn mean_distances(y: &Matrix, label: &[usize]) -> (f64, f64) {
    let (mut intra, mut inter, mut ni, mut ne) = (0.0, 0.0, 0usize, 0usize);
    for i in 0..y.rows() {
        for j in i + 1..y.rows() {
            let d =
                ((y.get(i, 0) - y.get(j, 0)).powi(2) + (y.get(i, 1) - y.get(j, 1)).powi(2)).sqrt();
            if label[i] == label[j] {
                intra += d;
                ni += 1;
            } else {
                inter += d;
                ne += 1;
            }
        }
    }
    (intra / ni as f64, inter / ne as f64)
}

#[test]
fn tsne_separates_clusters_and_descends() {
    let (x, label) = clusters(0);
    let res = tsne_embed(&x, &TsneOptions::default()).unwrap();
    assert_eq!(res.coords.shape(), (150, 2));
    assert_eq!(res.kl_history.len(), 750);
    let means: Vec<f64> = res
        .kl_history
        .chunks(50)
        .map(|w| w.iter().map(|p| p.1).sum::<f64>() / w.len() as f64)
        .collect();
    for w in means.windows(2) {
        assert!(w[1] <= w[0] + 1e-3, "{means:?}");
    }
    let (intra, inter) = mean_distances(&res.coords, &label);
    assert!(intra < inter, "{intra} vs {inter}");
    assert_eq!(res, tsne_embed(&x, &TsneOptions::default()).unwrap());
}

#[test]
fn tsne_handles_duplicates_and_checks_perplexity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = random_matrix(&mut rng, 10, 3);
    let mut rows: Vec<Vec<f64>> = (0..10).map(|i| base.row(i).to_vec()).collect();
    rows.extend((0..10).map(|i| base.row(i).to_vec()));
    let x = Matrix::from_rows(&rows);
    let opts = TsneOptions {
        perplexity: 5.0,
        iterations: 300,
        ..TsneOptions::default()
    };
    let res = tsne_embed(&x, &opts).unwrap();
    assert!(res.coords.is_finite());
    assert!(res.final_kl.is_finite() && res.final_kl >= 0.0);

    let too_high = TsneOptions {
        perplexity: 20.0,
        ..opts.clone()
    };
    assert!(tsne_embed(&x, &too_high).is_err());
    assert!(tsne_embed(&random_matrix(&mut rng, 4, 3), &opts).is_err());
}

#[test]
fn single_cell_grid_equals_direct_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 40;
    let (g, _) = random_graph(&mut rng, n, 0.1);
    let x = random_matrix(&mut rng, n, 5);
    let y: Vec<f64> = (0..n).map(|i| x.get(i, 0) * 3.0 + x.get(i, 1)).collect();
    let split = split_train_test(&(0..n).collect::<Vec<_>>(), 0.8, 1).unwrap();
    let names: Vec<String> = (0..5).map(|i| format!("f{i}")).collect();
    let base = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let grid = HyperGrid {
        learning_rates: vec![0.01],
        hidden_channels: vec![16],
        dropout_rates: vec![0.5],
    };
    let res = hyper_grid_search(&x, &y, &g, &split, &grid, &base, &names).unwrap();
    assert_eq!(res.cells.len(), 1);
    assert_eq!(res.best, 0);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        hidden_channels: 16,
        dropout_rate: 0.5,
        ..base
    };
    assert_eq!(res.best_config, cfg);
    let out = train(&x, &y, &g, &split, &cfg, &names).unwrap();
    let pred = out.checkpoint.predict(&x, &g).unwrap();
    assert_eq!(res.cells[0].test, evaluate(&pred, &y, &split.test).unwrap());
}

fn read_rows(path: &std::path::Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn exported_predictions_reproduce_reported_metrics() {
    let raw = generate_synthetic_trial(
        &SyntheticConfig {
            plots_per_field: vec![50, 40],
            ..SyntheticConfig::default()
        },
        2,
    )
    .unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.train.epochs = 40;
    cfg.train.seed = 2;
    cfg.tsne = Some(TsneOptions {
        perplexity: 10.0,
        iterations: 300,
        ..TsneOptions::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let report = run_pipeline(raw, &cfg, dir.path()).unwrap();

    let rows = read_rows(&dir.path().join("actual_vs_predicted.csv"));
    assert_eq!(rows.len(), 90);
    let test: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| &r[3] == "test")
        .map(|r| (r[1].parse().unwrap(), r[2].parse().unwrap()))
        .collect();
    let actual: Vec<f64> = test.iter().map(|p| p.0).collect();
    let pred: Vec<f64> = test.iter().map(|p| p.1).collect();
    let mask: Vec<usize> = (0..test.len()).collect();
    let m = evaluate(&pred, &actual, &mask).unwrap();
    assert!((m.r2 - report.metrics.r2).abs() < 1e-12);
    assert!((m.rmse - report.metrics.rmse).abs() < 1e-9);

    let split: SplitAssignment =
        serde_json::from_slice(&std::fs::read(dir.path().join("split.json")).unwrap()).unwrap();
    assert_eq!(split.test.len(), test.len());
    assert_eq!(read_rows(&dir.path().join("embeddings.csv")).len(), 90);
    assert_eq!(read_rows(&dir.path().join("tsne.csv")).len(), 90);
    assert_eq!(read_rows(&dir.path().join("loss_history.csv")).len(), 40);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metric_identities(
        target in prop::collection::vec(-1e3f64..1e3, 2..50),
        noise in prop::collection::vec(-10.0f64..10.0, 50),
    ) {
        let n = target.len();
        let mask: Vec<usize> = (0..n).collect();
        let mean = target.iter().sum::<f64>() / n as f64;
        prop_assume!(target.iter().any(|t| (t - mean).abs() > 1e-6));
        let pred: Vec<f64> = target.iter().zip(&noise).map(|(t, e)| t + e).collect();
        let m = evaluate(&pred, &target, &mask).unwrap();
        prop_assert!(m.rmse >= m.mae - 1e-10);
        let exact = evaluate(&target, &target, &mask).unwrap();
        prop_assert!((exact.r2 - 1.0).abs() < 1e-10);
        let flat = evaluate(&vec![mean; n], &target, &mask).unwrap();
        prop_assert!(flat.r2.abs() < 1e-10);
    }
}
