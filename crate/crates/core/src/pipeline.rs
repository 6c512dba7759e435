//! End-to-end run: preprocess, graph, train, evaluate, baseline, exports.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{preprocess, split_train_test, Dataset, PreprocessReport, SplitAssignment};
use crate::error::{Error, Result};
use crate::graph::{
    build_genotype_edges_partial, build_spatial_edges, pairwise_distances, union_graph, AgriGraph,
    DistanceMetric, SpatialOptions,
};
use crate::model::Checkpoint;
use crate::train::{
    evaluate, export_actual_vs_predicted, knn_grid_search, train, tsne_embed,
    write_actual_vs_predicted_csv, write_embeddings_csv, write_json, write_loss_history_csv,
    write_tsne_csv, KnnSearch, Metrics, TrainConfig, TrainOutcome, TsneOptions,
};
use crate::vegindex::{index_correlation_matrix, write_correlation_csv, write_indices_csv};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub spatial: SpatialOptions,
    pub metric: DistanceMetric,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            spatial: SpatialOptions::default(),
            metric: DistanceMetric::Euclidean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub folds: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            k_min: 1,
            k_max: 20,
            folds: 5,
        }
    }
}

impl BaselineConfig {
    pub fn k_range(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub graph: GraphConfig,
    pub train: TrainConfig,
    pub baseline: BaselineConfig,
    /// t-SNE of the exported embeddings; `None` skips it.
    pub tsne: Option<TsneOptions>,
}

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// Spatial plus genotypic graph over the dataset's plots.
pub fn build_graph(ds: &Dataset, cfg: &GraphConfig) -> Result<AgriGraph> {
    let d = pairwise_distances(&ds.coordinates(), cfg.metric)?;
    let spatial = build_spatial_edges(&d, &cfg.spatial)?;
    let genotypic = build_genotype_edges_partial(&ds.populations());
    union_graph(&spatial, &genotypic, ds.len())
}

pub fn split_dataset(ds: &Dataset, cfg: &TrainConfig) -> Result<SplitAssignment> {
    split_train_test(&ds.labeled_indices(), cfg.train_fraction, cfg.seed)
}

pub fn fit(
    ds: &Dataset,
    graph: &AgriGraph,
    split: &SplitAssignment,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train(
        &ds.feature_matrix(),
        &ds.target,
        graph,
        split,
        cfg,
        ds.feature_names(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub split_seed: u64,
    pub train: Metrics,
    /// Every labeled node, train and test together.
    pub full_graph: Metrics,
    pub config: TrainConfig,
}

/// Test, train and all-labeled metrics of a checkpoint.
pub fn metrics_report(
    ck: &Checkpoint,
    ds: &Dataset,
    graph: &AgriGraph,
    split: &SplitAssignment,
    cfg: &TrainConfig,
) -> Result<(MetricsReport, Vec<f64>)> {
    check_feature_layout(ck, ds)?;
    let pred = ck.predict(&ds.feature_matrix(), graph)?;
    let test = evaluate(&pred, &ds.target, &split.test)?;
    let mut all: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
    all.sort_unstable();
    Ok((
        MetricsReport {
            rmse: test.rmse,
            mae: test.mae,
            r2: test.r2,
            split_seed: split.seed,
            train: evaluate(&pred, &ds.target, &split.train)?,
            full_graph: evaluate(&pred, &ds.target, &all)?,
            config: cfg.clone(),
        },
        pred,
    ))
}

pub fn check_feature_layout(ck: &Checkpoint, ds: &Dataset) -> Result<()> {
    if ck.feature_names != ds.feature_names() {
        return Err(Error::Config(format!(
            "checkpoint expects {} features that do not match the dataset's {}",
            ck.feature_names.len(),
            ds.feature_count()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub k: usize,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub split_seed: u64,
    pub folds: usize,
    pub cv_rmse: Vec<CvScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub k: usize,
    pub rmse: f64,
}

pub fn run_baseline(
    ds: &Dataset,
    split: &SplitAssignment,
    cfg: &BaselineConfig,
) -> Result<(BaselineReport, KnnSearch)> {
    let search = knn_grid_search(
        &ds.coordinates(),
        &ds.target,
        split,
        &cfg.k_range(),
        cfg.folds,
        split.seed,
    )?;
    Ok((
        BaselineReport {
            k: search.k,
            rmse: search.test.rmse,
            mae: search.test.mae,
            r2: search.test.r2,
            split_seed: split.seed,
            folds: cfg.folds,
            cv_rmse: search
                .cv_rmse
                .iter()
                .map(|&(k, rmse)| CvScore { k, rmse })
                .collect(),
        },
        search,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub preprocess: PreprocessReport,
    pub node_count: usize,
    pub edge_count: usize,
    pub metrics: MetricsReport,
    pub baseline: BaselineReport,
}

/// Runs every stage on a raw dataset, writing all artifacts into `out`.
/// Files of completed stages stay in place when a later stage fails.
pub fn run_pipeline(
    raw: Dataset,
    cfg: &PipelineConfig,
    out: &Path,
) -> std::result::Result<PipelineReport, StageError> {
    std::fs::create_dir_all(out)
        .map_err(|e| Error::io(out, e))
        .stage("setup")?;
    let (ds, pre) = preprocess(raw).stage("preprocess")?;
    write_json(&pre, &out.join("preprocess_report.json")).stage("preprocess")?;

    write_indices_csv(&ds, &out.join("indices.csv")).stage("indices")?;
    let corr = index_correlation_matrix(&ds).stage("indices")?;
    write_correlation_csv(&corr, &out.join("index_correlation.csv")).stage("indices")?;

    let graph = build_graph(&ds, &cfg.graph).stage("graph")?;
    graph
        .write_edges_csv(&out.join("edges.csv"))
        .stage("graph")?;

    let split = split_dataset(&ds, &cfg.train).stage("split")?;
    write_json(&split, &out.join("split.json")).stage("split")?;

    let outcome = fit(&ds, &graph, &split, &cfg.train).stage("train")?;
    write_loss_history_csv(&outcome.history, &out.join("loss_history.csv")).stage("train")?;
    outcome
        .checkpoint
        .save(&out.join("model.json"))
        .stage("train")?;

    let (metrics, pred) =
        metrics_report(&outcome.checkpoint, &ds, &graph, &split, &cfg.train).stage("evaluate")?;
    write_json(&metrics, &out.join("metrics.json")).stage("evaluate")?;
    let plot_ids = ds.plot_ids();
    let rows =
        export_actual_vs_predicted(&plot_ids, &ds.target, &pred, &split).stage("evaluate")?;
    write_actual_vs_predicted_csv(&rows, &out.join("actual_vs_predicted.csv")).stage("evaluate")?;

    let (baseline, _) = run_baseline(&ds, &split, &cfg.baseline).stage("baseline")?;
    write_json(&baseline, &out.join("baseline_metrics.json")).stage("baseline")?;

    let emb = outcome
        .checkpoint
        .embed(&ds.feature_matrix(), &graph)
        .stage("embed")?;
    write_embeddings_csv(&plot_ids, &emb, &out.join("embeddings.csv")).stage("embed")?;
    if let Some(opts) = &cfg.tsne {
        let t = tsne_embed(&emb, opts).stage("embed")?;
        write_tsne_csv(&plot_ids, &t.coords, &out.join("tsne.csv")).stage("embed")?;
    }

    Ok(PipelineReport {
        preprocess: pre,
        node_count: graph.node_count(),
        edge_count: graph.edge_count(),
        metrics,
        baseline,
    })
}
