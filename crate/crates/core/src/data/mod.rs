//! Plot records, the feature table, and preprocessing.

mod csv_io;
mod preprocess;
mod split;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub use csv_io::{load_plots_csv, write_features_csv, write_plots_csv, CsvSchema};
pub use preprocess::{
    drop_invalid, filter_bands, impute_missing, normalize_yield, one_hot, preprocess,
    smooth_soil_grid, DropReport, PreprocessReport, MAX_WAVELENGTH_NM, MIN_WAVELENGTH_NM,
    REFERENCE_MOISTURE_PCT, UNKNOWN_LEVEL,
};
pub use split::{split_train_test, SplitAssignment};
pub use synthetic::{generate_synthetic_trial, SyntheticConfig, TrialType};

/// Soil attributes carried per plot, in table order.
pub const SOIL_COLUMNS: [&str; 10] = [
    "Ca", "CEC", "K", "Mg", "OM", "P1", "Ph", "Clay", "Sand", "Silt",
];

/// Categorical columns of the raw table.
pub const CATEGORICAL_COLUMNS: [&str; 3] = ["population", "field_no", "timepoint"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Timepoint {
    T1,
    T2,
    T3,
}

impl Timepoint {
    pub fn as_str(self) -> &'static str {
        match self {
            Timepoint::T1 => "T1",
            Timepoint::T2 => "T2",
            Timepoint::T3 => "T3",
        }
    }
}

impl std::str::FromStr for Timepoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T1" => Ok(Timepoint::T1),
            "T2" => Ok(Timepoint::T2),
            "T3" => Ok(Timepoint::T3),
            other => Err(Error::Domain(format!("unknown timepoint `{other}`"))),
        }
    }
}

/// One trial plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRecord {
    pub plot_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub population: Option<String>,
    /// `(wavelength nm, reflectance)` in increasing wavelength order.
    pub spectrum: Vec<(f64, f64)>,
    pub soil: BTreeMap<String, Option<f64>>,
    pub weather: BTreeMap<String, Option<f64>>,
    /// kg/ha as harvested; `None` for prediction-only plots.
    pub yield_raw: Option<f64>,
    pub moisture_pct: Option<f64>,
    pub timepoint: Option<Timepoint>,
    pub field_no: Option<u32>,
}

impl PlotRecord {
    /// Yield adjusted to the reference moisture when moisture is known.
    pub fn normalized_yield(&self) -> Result<Option<f64>> {
        match (self.yield_raw, self.moisture_pct) {
            (Some(y), Some(m)) => normalize_yield(y, m).map(Some),
            (y, None) => Ok(y),
            (None, Some(_)) => Ok(None),
        }
    }

    fn categorical(&self, column: &str) -> Option<String> {
        match column {
            "population" => self.population.clone(),
            "field_no" => self.field_no.map(|f| f.to_string()),
            "timepoint" => self.timepoint.map(|t| t.as_str().to_string()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct CategoricalColumn {
    name: String,
    values: Vec<Option<String>>,
}

/// Records plus the numeric feature table derived from them.
///
/// Feature cells are `f64` with `NaN` marking a missing value. Categorical
/// columns stay out of the numeric table until one-hot encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<PlotRecord>,
    feature_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    categorical: Vec<CategoricalColumn>,
    /// Moisture-normalized yield; `NaN` for unlabeled plots.
    pub target: Vec<f64>,
}

impl Dataset {
    /// Builds the raw table: coordinates, soil and weather columns as
    /// numeric features; population, field and timepoint as categoricals.
    pub fn from_records(records: Vec<PlotRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if !(-90.0..=90.0).contains(&r.latitude) || !(-180.0..=180.0).contains(&r.longitude) {
                return Err(Error::InvalidRecord {
                    row: i + 1,
                    message: format!("coordinates ({}, {}) out of range", r.latitude, r.longitude),
                });
            }
        }
        let target = records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.normalized_yield()
                    .map(|y| y.unwrap_or(f64::NAN))
                    .map_err(|e| Error::InvalidRecord {
                        row: i + 1,
                        message: e.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;

        let soil_present: BTreeSet<&str> = records
            .iter()
            .flat_map(|r| r.soil.keys().map(String::as_str))
            .collect();
        let weather_names: BTreeSet<&str> = records
            .iter()
            .flat_map(|r| r.weather.keys().map(String::as_str))
            .collect();

        let mut ds = Dataset {
            feature_names: Vec::new(),
            columns: Vec::new(),
            categorical: Vec::new(),
            target,
            records: Vec::new(),
        };
        ds.feature_names.push("latitude".into());
        ds.columns
            .push(records.iter().map(|r| r.latitude).collect());
        ds.feature_names.push("longitude".into());
        ds.columns
            .push(records.iter().map(|r| r.longitude).collect());
        for name in SOIL_COLUMNS.iter().filter(|n| soil_present.contains(*n)) {
            ds.feature_names.push((*name).to_string());
            ds.columns.push(
                records
                    .iter()
                    .map(|r| r.soil.get(*name).copied().flatten().unwrap_or(f64::NAN))
                    .collect(),
            );
        }
        for name in weather_names {
            ds.feature_names.push(name.to_string());
            ds.columns.push(
                records
                    .iter()
                    .map(|r| r.weather.get(name).copied().flatten().unwrap_or(f64::NAN))
                    .collect(),
            );
        }
        for name in CATEGORICAL_COLUMNS {
            ds.categorical.push(CategoricalColumn {
                name: name.to_string(),
                values: records.iter().map(|r| r.categorical(name)).collect(),
            });
        }
        ds.records = records;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn categorical_names(&self) -> impl Iterator<Item = &str> {
        self.categorical.iter().map(|c| c.name.as_str())
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Appends a numeric feature column.
    pub fn push_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Shape {
                op: "push_column",
                left: (self.len(), 1),
                right: (values.len(), 1),
            });
        }
        if self.feature_names.iter().any(|n| n == name) {
            return Err(Error::Domain(format!("duplicate column `{name}`")));
        }
        self.feature_names.push(name.to_string());
        self.columns.push(values);
        Ok(())
    }

    /// The `n × p` feature matrix (missing cells stay `NaN`).
    pub fn feature_matrix(&self) -> Matrix {
        let (n, p) = (self.len(), self.feature_count());
        let mut m = Matrix::zeros(n, p);
        for (c, col) in self.columns.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                m.set(r, c, v);
            }
        }
        m
    }

    pub fn missing_cells(&self) -> usize {
        self.columns
            .iter()
            .map(|c| c.iter().filter(|v| v.is_nan()).count())
            .sum()
    }

    /// Indices of records with a finite target.
    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.target[i].is_finite())
            .collect()
    }

    pub fn coordinates(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.latitude, r.longitude))
            .collect()
    }

    /// Population label per record, `None` when missing.
    pub fn populations(&self) -> Vec<Option<&str>> {
        self.records
            .iter()
            .map(|r| r.population.as_deref())
            .collect()
    }

    pub fn plot_ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.plot_id.as_str()).collect()
    }

    /// Keeps rows where `keep[i]` holds.
    pub(crate) fn retain_rows(&mut self, keep: &[bool]) {
        debug_assert_eq!(keep.len(), self.len());
        fn filter<T: Clone>(v: &mut Vec<T>, keep: &[bool]) {
            let mut i = 0;
            v.retain(|_| {
                let k = keep[i];
                i += 1;
                k
            });
        }
        filter(&mut self.records, keep);
        filter(&mut self.target, keep);
        for c in &mut self.columns {
            filter(c, keep);
        }
        for c in &mut self.categorical {
            filter(&mut c.values, keep);
        }
    }

    pub(crate) fn columns_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.columns
    }

    fn take_categorical(&mut self, name: &str) -> Result<CategoricalColumn> {
        let pos = self
            .categorical
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        Ok(self.categorical.remove(pos))
    }

    /// Field-by-field equality treating `NaN` cells as equal.
    pub fn same_contents(&self, other: &Dataset) -> bool {
        let bits = |cols: &[Vec<f64>]| -> Vec<Vec<u64>> {
            cols.iter()
                .map(|c| c.iter().map(|v| v.to_bits()).collect())
                .collect()
        };
        self.records == other.records
            && self.feature_names == other.feature_names
            && bits(&self.columns) == bits(&other.columns)
            && self.categorical == other.categorical
            && bits(std::slice::from_ref(&self.target)) == bits(std::slice::from_ref(&other.target))
    }
}
