//! Flat `namespace.key=value` run configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! seed=7
//! graph.percentile=3
//! model.hidden=32
//! ```
//!
//! Unknown and repeated keys are errors. [`RunConfig::render`] writes every
//! key in a fixed order, and parsing that output reproduces the config.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use agri_gnn::data::{CsvSchema, SyntheticConfig, TrialType};
use agri_gnn::graph::{DistanceMetric, EdgeMode};
use agri_gnn::model::FinalActivation;
use agri_gnn::pipeline::PipelineConfig;
use agri_gnn::train::{HyperGrid, TsneOptions};
use agri_gnn::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    pub schema: CsvSchema,
    pub simulate: SyntheticConfig,
    pub pipeline: PipelineConfig,
    pub tsne_enabled: bool,
    pub tsne: TsneOptions,
    pub grid: HyperGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            input: None,
            schema: CsvSchema::default(),
            simulate: SyntheticConfig::default(),
            pipeline: PipelineConfig::default(),
            tsne_enabled: false,
            tsne: TsneOptions::default(),
            grid: HyperGrid::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, Error> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, Error> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, Error> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}`: expected true or false, got {value:?}"
        ))),
    }
}

fn parse_trial(key: &str, value: &str) -> Result<TrialType, Error> {
    match value {
        "pyt" => Ok(TrialType::Pyt),
        "ayt" => Ok(TrialType::Ayt),
        _ => Err(Error::Config(format!(
            "`{key}`: trial type must be pyt or ayt, got {value:?}"
        ))),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let sim = &mut self.simulate;
        let pipe = &mut self.pipeline;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "data.input" => {
                self.input = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "data.plot_id_column" => self.schema.plot_id = value.into(),
            "data.latitude_column" => self.schema.latitude = value.into(),
            "data.longitude_column" => self.schema.longitude = value.into(),
            "data.population_column" => self.schema.population = value.into(),
            "data.yield_column" => self.schema.yield_column = value.into(),
            "data.field_column" => self.schema.field_no = value.into(),
            "data.timepoint_column" => self.schema.timepoint = value.into(),
            "data.moisture_column" => self.schema.moisture_pct = value.into(),

            "simulate.plots_per_field" => sim.plots_per_field = parse_list(key, value)?,
            "simulate.trial_types" => {
                sim.trial_types = value
                    .split(',')
                    .map(|v| parse_trial(key, v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "simulate.populations_per_field" => sim.populations_per_field = parse(key, value)?,
            "simulate.noise_level" => sim.noise_level = parse(key, value)?,
            "simulate.ndvi_effect" => sim.ndvi_effect = parse(key, value)?,
            "simulate.vigor_sd" => sim.vigor_sd = parse(key, value)?,
            "simulate.field_baseline_mean" => sim.field_baseline_mean = parse(key, value)?,
            "simulate.field_baseline_sd" => sim.field_baseline_sd = parse(key, value)?,
            "simulate.population_effect_sd" => sim.population_effect_sd = parse(key, value)?,
            "simulate.spatial_sd" => sim.spatial_sd = parse(key, value)?,
            "simulate.bumps_per_field" => sim.bumps_per_field = parse(key, value)?,
            "simulate.yield_noise_sd" => sim.yield_noise_sd = parse(key, value)?,
            "simulate.spectral_noise_sd" => sim.spectral_noise_sd = parse(key, value)?,
            "simulate.band_start_nm" => sim.band_start_nm = parse(key, value)?,
            "simulate.band_end_nm" => sim.band_end_nm = parse(key, value)?,
            "simulate.band_step_nm" => sim.band_step_nm = parse(key, value)?,
            "simulate.missing_soil_fraction" => sim.missing_soil_fraction = parse(key, value)?,
            "simulate.origin_lat" => sim.origin_lat = parse(key, value)?,
            "simulate.origin_lon" => sim.origin_lon = parse(key, value)?,
            "simulate.field_gap_m" => sim.field_gap_m = parse(key, value)?,

            "graph.edge_mode" => pipe.graph.spatial.mode = EdgeMode::from_str(value)?,
            "graph.percentile" => pipe.graph.spatial.percentile = parse(key, value)?,
            "graph.threshold_closed" => pipe.graph.spatial.closed = parse_bool(key, value)?,
            "graph.metric" => pipe.graph.metric = DistanceMetric::from_str(value)?,

            "model.hidden" => pipe.train.hidden_channels = parse(key, value)?,
            "model.dropout" => pipe.train.dropout_rate = parse(key, value)?,
            "model.final_activation" => {
                pipe.train.final_activation = match value {
                    "identity" => FinalActivation::Identity,
                    "relu" => FinalActivation::Relu,
                    _ => {
                        return Err(Error::Config(format!(
                            "`{key}`: expected identity or relu, got {value:?}"
                        )))
                    }
                }
            }

            "train.lr" => pipe.train.learning_rate = parse(key, value)?,
            "train.epochs" => pipe.train.epochs = parse(key, value)?,
            "train.split" => pipe.train.train_fraction = parse(key, value)?,

            "baseline.k_min" => pipe.baseline.k_min = parse(key, value)?,
            "baseline.k_max" => pipe.baseline.k_max = parse(key, value)?,
            "baseline.folds" => pipe.baseline.folds = parse(key, value)?,

            "tsne.enabled" => self.tsne_enabled = parse_bool(key, value)?,
            "tsne.perplexity" => self.tsne.perplexity = parse(key, value)?,
            "tsne.iterations" => self.tsne.iterations = parse(key, value)?,
            "tsne.learning_rate" => self.tsne.learning_rate = parse(key, value)?,

            "grid.lr" => self.grid.learning_rates = parse_list(key, value)?,
            "grid.hidden" => self.grid.hidden_channels = parse_list(key, value)?,
            "grid.dropout" => self.grid.dropout_rates = parse_list(key, value)?,

            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let sim = &self.simulate;
        let pipe = &self.pipeline;
        let s = &self.schema;
        vec![
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            (
                "data.input",
                self.input
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("data.plot_id_column", s.plot_id.clone()),
            ("data.latitude_column", s.latitude.clone()),
            ("data.longitude_column", s.longitude.clone()),
            ("data.population_column", s.population.clone()),
            ("data.yield_column", s.yield_column.clone()),
            ("data.field_column", s.field_no.clone()),
            ("data.timepoint_column", s.timepoint.clone()),
            ("data.moisture_column", s.moisture_pct.clone()),
            ("simulate.plots_per_field", join(&sim.plots_per_field)),
            (
                "simulate.trial_types",
                sim.trial_types
                    .iter()
                    .map(|t| match t {
                        TrialType::Pyt => "pyt",
                        TrialType::Ayt => "ayt",
                    })
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "simulate.populations_per_field",
                sim.populations_per_field.to_string(),
            ),
            ("simulate.noise_level", sim.noise_level.to_string()),
            ("simulate.ndvi_effect", sim.ndvi_effect.to_string()),
            ("simulate.vigor_sd", sim.vigor_sd.to_string()),
            (
                "simulate.field_baseline_mean",
                sim.field_baseline_mean.to_string(),
            ),
            (
                "simulate.field_baseline_sd",
                sim.field_baseline_sd.to_string(),
            ),
            (
                "simulate.population_effect_sd",
                sim.population_effect_sd.to_string(),
            ),
            ("simulate.spatial_sd", sim.spatial_sd.to_string()),
            ("simulate.bumps_per_field", sim.bumps_per_field.to_string()),
            ("simulate.yield_noise_sd", sim.yield_noise_sd.to_string()),
            (
                "simulate.spectral_noise_sd",
                sim.spectral_noise_sd.to_string(),
            ),
            ("simulate.band_start_nm", sim.band_start_nm.to_string()),
            ("simulate.band_end_nm", sim.band_end_nm.to_string()),
            ("simulate.band_step_nm", sim.band_step_nm.to_string()),
            (
                "simulate.missing_soil_fraction",
                sim.missing_soil_fraction.to_string(),
            ),
            ("simulate.origin_lat", sim.origin_lat.to_string()),
            ("simulate.origin_lon", sim.origin_lon.to_string()),
            ("simulate.field_gap_m", sim.field_gap_m.to_string()),
            (
                "graph.edge_mode",
                match pipe.graph.spatial.mode {
                    EdgeMode::Global => "global",
                    EdgeMode::PerNode => "per-node",
                }
                .into(),
            ),
            (
                "graph.percentile",
                pipe.graph.spatial.percentile.to_string(),
            ),
            (
                "graph.threshold_closed",
                pipe.graph.spatial.closed.to_string(),
            ),
            (
                "graph.metric",
                match pipe.graph.metric {
                    DistanceMetric::Euclidean => "euclidean",
                    DistanceMetric::Haversine => "haversine",
                }
                .into(),
            ),
            ("model.hidden", pipe.train.hidden_channels.to_string()),
            ("model.dropout", pipe.train.dropout_rate.to_string()),
            (
                "model.final_activation",
                match pipe.train.final_activation {
                    FinalActivation::Identity => "identity",
                    FinalActivation::Relu => "relu",
                }
                .into(),
            ),
            ("train.lr", pipe.train.learning_rate.to_string()),
            ("train.epochs", pipe.train.epochs.to_string()),
            ("train.split", pipe.train.train_fraction.to_string()),
            ("baseline.k_min", pipe.baseline.k_min.to_string()),
            ("baseline.k_max", pipe.baseline.k_max.to_string()),
            ("baseline.folds", pipe.baseline.folds.to_string()),
            ("tsne.enabled", self.tsne_enabled.to_string()),
            ("tsne.perplexity", self.tsne.perplexity.to_string()),
            ("tsne.iterations", self.tsne.iterations.to_string()),
            ("tsne.learning_rate", self.tsne.learning_rate.to_string()),
            ("grid.lr", join(&self.grid.learning_rates)),
            ("grid.hidden", join(&self.grid.hidden_channels)),
            ("grid.dropout", join(&self.grid.dropout_rates)),
        ]
    }

    /// Applies the lines of a config document on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), Error> {
        let mut seen = std::collections::BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    n + 1
                )));
            }
            self.set(key, value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// The resolved document, one `key=value` per line.
    pub fn render(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Pushes the global seed into every seeded component and checks all
    /// sections.
    pub fn finalize(&mut self) -> Result<(), Error> {
        self.pipeline.train.seed = self.seed;
        self.tsne.seed = self.seed;
        self.pipeline.tsne = self.tsne_enabled.then(|| self.tsne.clone());
        self.simulate.validate()?;
        self.pipeline.train.validate()?;
        let b = &self.pipeline.baseline;
        if b.k_min == 0 || b.k_min > b.k_max {
            return Err(Error::Config(format!(
                "baseline k range {}..={} is empty or starts at 0",
                b.k_min, b.k_max
            )));
        }
        let p = self.pipeline.graph.spatial.percentile;
        if !(p > 0.0 && p <= 100.0) {
            return Err(Error::Config(format!(
                "graph.percentile must lie in (0, 100], got {p}"
            )));
        }
        Ok(())
    }
}
