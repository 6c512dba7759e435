use agri_gnn::data::{
    generate_synthetic_trial, load_plots_csv, preprocess, split_train_test, write_plots_csv,
    CsvSchema, SyntheticConfig,
};
use agri_gnn::vegindex::catalog;
use agri_gnn::ErrorClass;

fn small() -> SyntheticConfig {
    SyntheticConfig {
        plots_per_field: vec![40, 30],
        ..SyntheticConfig::default()
    }
}

#[test]
fn default_trial_has_3161_plots() {
    let ds = generate_synthetic_trial(&SyntheticConfig::default(), 0).unwrap();
    assert_eq!(ds.len(), 3161);
    assert_eq!(ds.labeled_indices().len(), 3161);
}

#[test]
fn csv_roundtrip_preserves_dataset() {
    let ds = generate_synthetic_trial(&small(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plots.csv");
    write_plots_csv(&ds.records, &path).unwrap();
    let back = load_plots_csv(&path, &CsvSchema::default()).unwrap();
    assert!(ds.same_contents(&back));

    // Rewriting the loaded table gives the same bytes.
    let again = dir.path().join("again.csv");
    write_plots_csv(&back.records, &again).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&again).unwrap()
    );
}

#[test]
fn preprocessing_yields_complete_feature_table() {
    let ds = generate_synthetic_trial(&small(), 5).unwrap();
    let n = ds.len();
    let (clean, report) = preprocess(ds).unwrap();
    assert_eq!(report.rows_in, n);
    assert_eq!(report.rows_out, clean.len());
    assert!(report.cells_imputed > 0);
    let names = clean.feature_names();
    for def in catalog() {
        assert!(names.iter().any(|f| f == def.name), "{}", def.name);
    }
    let x = clean.feature_matrix();
    assert_eq!(x.shape(), (clean.len(), report.feature_count));
    assert!(x.data().iter().all(|v| v.is_finite()));
    assert_eq!(clean.missing_cells(), 0);
    assert!(clean.target.iter().all(|y| y.is_finite() && *y >= 0.0));
}

#[test]
fn preprocessing_is_deterministic() {
    let a = preprocess(generate_synthetic_trial(&small(), 9).unwrap()).unwrap();
    let b = preprocess(generate_synthetic_trial(&small(), 9).unwrap()).unwrap();
    assert_eq!(a.1, b.1);
    assert!(a.0.same_contents(&b.0));
    let c = generate_synthetic_trial(&small(), 10).unwrap();
    assert!(!generate_synthetic_trial(&small(), 9)
        .unwrap()
        .same_contents(&c));
}

#[test]
fn split_covers_labeled_nodes_once() {
    let ds = generate_synthetic_trial(&small(), 1).unwrap();
    let labeled = ds.labeled_indices();
    let s = split_train_test(&labeled, 0.8, 4).unwrap();
    assert_eq!(s.train.len(), 56);
    let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, labeled);
}

#[test]
fn malformed_tables_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "no_yield.csv",
            "plot_id,latitude,longitude,population,500\np1,42,-93,A,0.2\n",
        ),
        (
            "bad_cell.csv",
            "plot_id,latitude,longitude,population,yield,500\np1,42,-93,A,abc,0.2\n",
        ),
        (
            "no_coord.csv",
            "plot_id,latitude,longitude,population,yield,500\np1,,-93,A,3000,0.2\n",
        ),
    ];
    for (name, body) in cases {
        let path = dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        let err = load_plots_csv(&path, &CsvSchema::default()).unwrap_err();
        assert_eq!(err.class(), ErrorClass::Input, "{name}: {err}");
    }
    let missing = load_plots_csv(&dir.path().join("absent.csv"), &CsvSchema::default());
    assert_eq!(missing.unwrap_err().class(), ErrorClass::Io);
}
