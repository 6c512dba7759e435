//! Command-line driver: every subcommand is a pure function of its input
//! files, the resolved config and the seed.

pub mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use agri_gnn::data::{
    generate_synthetic_trial, load_plots_csv, preprocess, write_features_csv, write_plots_csv,
    Dataset,
};
use agri_gnn::graph::EdgeMode;
use agri_gnn::model::Checkpoint;
use agri_gnn::pipeline::{
    build_graph, check_feature_layout, fit, metrics_report, run_baseline, run_pipeline,
    split_dataset, StageError,
};
use agri_gnn::train::{
    export_actual_vs_predicted, hyper_grid_search, tsne_embed, write_actual_vs_predicted_csv,
    write_embeddings_csv, write_grid_results_csv, write_json, write_loss_history_csv,
    write_tsne_csv,
};
use agri_gnn::vegindex::{
    compute_all_indices, index_correlation_matrix, write_correlation_csv, write_indices_csv,
};
use agri_gnn::{Error, ErrorClass};

pub use config::RunConfig;

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";

#[derive(Debug, Parser)]
#[command(name = "agri-gnn", version, about = "Graph-based crop-yield pipeline")]
pub struct Cli {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct InputArgs {
    /// Plot CSV in the ingest layout (overrides `data.input`).
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct GraphArgs {
    /// `global` or `per-node`.
    #[arg(long)]
    pub edge_mode: Option<String>,
    /// Spatial percentile p in (0, 100].
    #[arg(long)]
    pub percentile: Option<f64>,
    /// Use `<=` instead of `<` against the global threshold.
    #[arg(long)]
    pub threshold_closed: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trial and write plots.csv.
    Simulate {
        /// Number of fields (cycles the configured field list).
        #[arg(long)]
        fields: Option<usize>,
        /// Plots in every field.
        #[arg(long)]
        plots: Option<usize>,
    },
    /// Load and clean a plot CSV; writes features.csv and the cleaning report.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Vegetation indices and their correlation matrix.
    Indices {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Build the plot graph and write edges.csv.
    Graph {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Train the network; writes model.json and loss_history.csv.
    Train {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        graph: GraphArgs,
        /// Search the hyperparameter grid first and train the best cell.
        #[arg(long)]
        grid: bool,
    },
    /// Score a checkpoint; writes metrics.json and actual_vs_predicted.csv.
    Evaluate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        graph: GraphArgs,
        /// Checkpoint (default: <out>/model.json).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// K-NN baseline on coordinates; writes baseline_metrics.json.
    Baseline {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Export node embeddings and their t-SNE projection.
    Embed {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Every stage end to end (simulates data when no input is given).
    Pipeline {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        graph: GraphArgs,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{command}: {source}")]
    Command {
        command: &'static str,
        #[source]
        source: Error,
    },
    #[error(transparent)]
    Stage(#[from] StageError),
}

impl CliError {
    fn core(&self) -> &Error {
        match self {
            CliError::Command { source, .. } => source,
            CliError::Stage(s) => &s.error,
        }
    }

    /// 2 input/schema, 3 numeric, 4 config, 1 filesystem.
    pub fn exit_code(&self) -> i32 {
        match self.core().class() {
            ErrorClass::Input => 2,
            ErrorClass::Numeric => 3,
            ErrorClass::Config => 4,
            ErrorClass::Io => 1,
        }
    }
}

trait Tag<T> {
    fn tag(self, command: &'static str) -> Result<T, CliError>;
}

impl<T> Tag<T> for agri_gnn::Result<T> {
    fn tag(self, command: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Command { command, source })
    }
}

impl GraphArgs {
    fn apply(&self, cfg: &mut RunConfig) -> agri_gnn::Result<()> {
        if let Some(m) = &self.edge_mode {
            cfg.pipeline.graph.spatial.mode = m.parse::<EdgeMode>()?;
        }
        if let Some(p) = self.percentile {
            cfg.pipeline.graph.spatial.percentile = p;
        }
        if self.threshold_closed {
            cfg.pipeline.graph.spatial.closed = true;
        }
        Ok(())
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Ingest { .. } => "ingest",
            Command::Indices { .. } => "indices",
            Command::Graph { .. } => "graph",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Baseline { .. } => "baseline",
            Command::Embed { .. } => "embed",
            Command::Pipeline { .. } => "pipeline",
        }
    }

    fn input(&self) -> Option<&InputArgs> {
        match self {
            Command::Simulate { .. } => None,
            Command::Ingest { input }
            | Command::Indices { input }
            | Command::Graph { input, .. }
            | Command::Train { input, .. }
            | Command::Evaluate { input, .. }
            | Command::Baseline { input }
            | Command::Embed { input, .. }
            | Command::Pipeline { input, .. } => Some(input),
        }
    }

    fn graph(&self) -> Option<&GraphArgs> {
        match self {
            Command::Graph { graph, .. }
            | Command::Train { graph, .. }
            | Command::Evaluate { graph, .. }
            | Command::Embed { graph, .. }
            | Command::Pipeline { graph, .. } => Some(graph),
            _ => None,
        }
    }
}

/// Defaults, then the config file, then command-line flags.
pub fn resolve_config(cli: &Cli) -> agri_gnn::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(i) = cli.command.input().and_then(|i| i.input.clone()) {
        cfg.input = Some(i);
    }
    if let Some(g) = cli.command.graph() {
        g.apply(&mut cfg)?;
    }
    if let Command::Simulate { fields, plots } = &cli.command {
        let sim = &mut cfg.simulate;
        if let Some(f) = *fields {
            if f == 0 {
                return Err(Error::Config("--fields must be positive".into()));
            }
            sim.plots_per_field = sim
                .plots_per_field
                .iter()
                .copied()
                .cycle()
                .take(f)
                .collect();
        }
        if let Some(p) = *plots {
            sim.plots_per_field.iter_mut().for_each(|n| *n = p);
        }
    }
    cfg.finalize()?;
    Ok(cfg)
}

fn prepare_out(cfg: &RunConfig) -> agri_gnn::Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", cfg.out.display())))?;
    std::fs::write(cfg.out.join(RESOLVED_CONFIG_FILE), cfg.render())
        .map_err(|e| Error::Config(format!("cannot write resolved config: {e}")))?;
    Ok(cfg.out.clone())
}

fn load_raw(cfg: &RunConfig) -> agri_gnn::Result<Dataset> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("no input: pass --input or set data.input".into()))?;
    load_plots_csv(path, &cfg.schema)
}

fn load_clean(cfg: &RunConfig) -> agri_gnn::Result<Dataset> {
    Ok(preprocess(load_raw(cfg)?)?.0)
}

fn load_checkpoint(model: &Option<PathBuf>, out: &Path) -> agri_gnn::Result<Checkpoint> {
    let path = model.clone().unwrap_or_else(|| out.join("model.json"));
    Checkpoint::load(&path)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let name = cli.command.name();
    let cfg = resolve_config(cli).tag(name)?;
    let out = prepare_out(&cfg).tag(name)?;
    match &cli.command {
        Command::Simulate { .. } => {
            let ds = generate_synthetic_trial(&cfg.simulate, cfg.seed).tag(name)?;
            write_plots_csv(&ds.records, &out.join("plots.csv")).tag(name)?;
        }
        Command::Ingest { .. } => {
            let (ds, report) = preprocess(load_raw(&cfg).tag(name)?).tag(name)?;
            write_json(&report, &out.join("preprocess_report.json")).tag(name)?;
            write_features_csv(&ds, &out.join("features.csv")).tag(name)?;
        }
        Command::Indices { .. } => {
            let mut ds = load_raw(&cfg).tag(name)?;
            let report = compute_all_indices(&mut ds).tag(name)?;
            write_indices_csv(&ds, &out.join("indices.csv")).tag(name)?;
            let corr = index_correlation_matrix(&ds).tag(name)?;
            write_correlation_csv(&corr, &out.join("index_correlation.csv")).tag(name)?;
            write_json(
                &json!({
                    "flagged_rows": report.flagged_rows,
                    "missing_cells": report.missing_cells,
                }),
                &out.join("indices_report.json"),
            )
            .tag(name)?;
        }
        Command::Graph { .. } => {
            let ds = load_clean(&cfg).tag(name)?;
            let g = build_graph(&ds, &cfg.pipeline.graph).tag(name)?;
            g.write_edges_csv(&out.join("edges.csv")).tag(name)?;
            write_json(
                &json!({
                    "nodes": g.node_count(),
                    "edges": g.edge_count(),
                    "spatial_edges": g.spatial_edge_count(),
                    "genotypic_edges": g.genotypic_edge_count(),
                }),
                &out.join("graph_summary.json"),
            )
            .tag(name)?;
        }
        Command::Train { grid, .. } => {
            let ds = load_clean(&cfg).tag(name)?;
            let g = build_graph(&ds, &cfg.pipeline.graph).tag(name)?;
            let split = split_dataset(&ds, &cfg.pipeline.train).tag(name)?;
            write_json(&split, &out.join("split.json")).tag(name)?;
            let mut train_cfg = cfg.pipeline.train.clone();
            if *grid {
                let result = hyper_grid_search(
                    &ds.feature_matrix(),
                    &ds.target,
                    &g,
                    &split,
                    &cfg.grid,
                    &train_cfg,
                    ds.feature_names(),
                )
                .tag(name)?;
                write_grid_results_csv(&result.cells, &out.join("grid_results.csv")).tag(name)?;
                train_cfg = result.best_config;
            }
            let outcome = fit(&ds, &g, &split, &train_cfg).tag(name)?;
            write_loss_history_csv(&outcome.history, &out.join("loss_history.csv")).tag(name)?;
            outcome.checkpoint.save(&out.join("model.json")).tag(name)?;
        }
        Command::Evaluate { model, .. } => {
            let ds = load_clean(&cfg).tag(name)?;
            let ck = load_checkpoint(model, &out).tag(name)?;
            check_feature_layout(&ck, &ds).tag(name)?;
            let g = build_graph(&ds, &cfg.pipeline.graph).tag(name)?;
            let split = split_dataset(&ds, &cfg.pipeline.train).tag(name)?;
            let mut train_cfg = cfg.pipeline.train.clone();
            let mc = &ck.model.config;
            train_cfg.hidden_channels = mc.hidden_channels;
            train_cfg.dropout_rate = mc.dropout_rate;
            train_cfg.final_activation = mc.final_activation;
            let (report, pred) = metrics_report(&ck, &ds, &g, &split, &train_cfg).tag(name)?;
            write_json(&report, &out.join("metrics.json")).tag(name)?;
            let rows =
                export_actual_vs_predicted(&ds.plot_ids(), &ds.target, &pred, &split).tag(name)?;
            write_actual_vs_predicted_csv(&rows, &out.join("actual_vs_predicted.csv")).tag(name)?;
        }
        Command::Baseline { .. } => {
            let ds = load_clean(&cfg).tag(name)?;
            let split = split_dataset(&ds, &cfg.pipeline.train).tag(name)?;
            let (report, _) = run_baseline(&ds, &split, &cfg.pipeline.baseline).tag(name)?;
            write_json(&report, &out.join("baseline_metrics.json")).tag(name)?;
        }
        Command::Embed { model, .. } => {
            let ds = load_clean(&cfg).tag(name)?;
            let ck = load_checkpoint(model, &out).tag(name)?;
            check_feature_layout(&ck, &ds).tag(name)?;
            let g = build_graph(&ds, &cfg.pipeline.graph).tag(name)?;
            let emb = ck.embed(&ds.feature_matrix(), &g).tag(name)?;
            let ids = ds.plot_ids();
            write_embeddings_csv(&ids, &emb, &out.join("embeddings.csv")).tag(name)?;
            let t = tsne_embed(&emb, &cfg.tsne).tag(name)?;
            write_tsne_csv(&ids, &t.coords, &out.join("tsne.csv")).tag(name)?;
            write_json(
                &json!({ "final_kl": t.final_kl }),
                &out.join("tsne_report.json"),
            )
            .tag(name)?;
        }
        Command::Pipeline { .. } => {
            let raw = match &cfg.input {
                Some(_) => load_raw(&cfg).tag("ingest")?,
                None => {
                    let ds = generate_synthetic_trial(&cfg.simulate, cfg.seed).tag("simulate")?;
                    write_plots_csv(&ds.records, &out.join("plots.csv")).tag("simulate")?;
                    ds
                }
            };
            run_pipeline(raw, &cfg.pipeline, &out)?;
        }
    }
    Ok(())
}
