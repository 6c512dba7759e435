use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::vegindex;

/// Lowest retained wavelength; readings below it are unreliable.
pub const MIN_WAVELENGTH_NM: f64 = 400.0;
pub const MAX_WAVELENGTH_NM: f64 = 1000.0;
/// Moisture content every yield is adjusted to.
pub const REFERENCE_MOISTURE_PCT: f64 = 13.0;
/// Level assigned to missing categorical cells.
pub const UNKNOWN_LEVEL: &str = "UNKNOWN";

/// Counts written alongside preprocessed data.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub rows_in: usize,
    pub rows_dropped_negative_reflectance: usize,
    pub rows_dropped_negative_yield: usize,
    pub cells_imputed: usize,
    pub empty_spectra: usize,
    pub rows_out: usize,
    pub feature_count: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropReport {
    pub negative_reflectance: usize,
    pub negative_yield: usize,
}

impl DropReport {
    pub fn total(&self) -> usize {
        self.negative_reflectance + self.negative_yield
    }
}

/// Dry-matter correction `y · (100 − m) / (100 − 13)`.
pub fn normalize_yield(yield_raw: f64, moisture_pct: f64) -> Result<f64> {
    if !(0.0..100.0).contains(&moisture_pct) {
        return Err(Error::Domain(format!(
            "moisture must lie in [0, 100), got {moisture_pct}"
        )));
    }
    Ok(yield_raw * (100.0 - moisture_pct) / (100.0 - REFERENCE_MOISTURE_PCT))
}

/// Removes spectral samples outside 400–1000 nm. Returns the number of
/// records left with an empty spectrum.
pub fn filter_bands(mut ds: Dataset) -> (Dataset, usize) {
    let mut empty = 0;
    for r in &mut ds.records {
        r.spectrum
            .retain(|&(w, _)| (MIN_WAVELENGTH_NM..=MAX_WAVELENGTH_NM).contains(&w));
        if r.spectrum.is_empty() {
            empty += 1;
        }
    }
    (ds, empty)
}

/// Drops records with any negative in-range reflectance, then records with
/// a negative yield. Unlabeled records are kept.
pub fn drop_invalid(mut ds: Dataset) -> (Dataset, DropReport) {
    let mut report = DropReport::default();
    let keep: Vec<bool> = ds
        .records
        .iter()
        .zip(&ds.target)
        .map(|(r, &y)| {
            let bad_spectrum = r
                .spectrum
                .iter()
                .any(|&(w, v)| (MIN_WAVELENGTH_NM..=MAX_WAVELENGTH_NM).contains(&w) && v < 0.0);
            if bad_spectrum {
                report.negative_reflectance += 1;
                false
            } else if y < 0.0 || r.yield_raw.is_some_and(|v| v < 0.0) {
                report.negative_yield += 1;
                false
            } else {
                true
            }
        })
        .collect();
    ds.retain_rows(&keep);
    (ds, report)
}

/// Fills every missing numeric cell with its column's observed mean.
/// Returns the number of filled cells.
pub fn impute_missing(mut ds: Dataset) -> Result<(Dataset, usize)> {
    let names = ds.feature_names().to_vec();
    let mut filled = 0;
    for (name, col) in names.iter().zip(ds.columns_mut()) {
        let missing = col.iter().filter(|v| v.is_nan()).count();
        if missing == 0 {
            continue;
        }
        if missing == col.len() {
            return Err(Error::Unimputable(name.clone()));
        }
        let observed: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        for v in col.iter_mut().filter(|v| v.is_nan()) {
            *v = mean;
        }
        filled += missing;
    }
    Ok((ds, filled))
}

/// Replaces a categorical column by one indicator column per level, levels
/// sorted lexicographically; missing cells become the `UNKNOWN` level.
/// Indicator columns are named `column=level`.
pub fn one_hot(mut ds: Dataset, column: &str) -> Result<Dataset> {
    let cat = ds.take_categorical(column)?;
    let values: Vec<&str> = cat
        .values
        .iter()
        .map(|v| v.as_deref().unwrap_or(UNKNOWN_LEVEL))
        .collect();
    let levels: BTreeSet<&str> = values.iter().copied().collect();
    for level in levels {
        let indicator = values
            .iter()
            .map(|&v| if v == level { 1.0 } else { 0.0 })
            .collect();
        ds.push_column(&format!("{column}={level}"), indicator)?;
    }
    Ok(ds)
}

/// 3×3 moving mean. Border cells average only their in-bounds neighbours.
pub fn smooth_soil_grid(grid: &Matrix) -> Matrix {
    let (rows, cols) = grid.shape();
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let (mut sum, mut count) = (0.0, 0usize);
            for rr in r.saturating_sub(1)..=(r + 1).min(rows - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
                    sum += grid.get(rr, cc);
                    count += 1;
                }
            }
            out.set(r, c, sum / count as f64);
        }
    }
    out
}

/// Full cleaning pass: band filter, invalid-row removal, the 52 vegetation
/// indices, one-hot encoding of every categorical, mean imputation.
pub fn preprocess(ds: Dataset) -> Result<(Dataset, PreprocessReport)> {
    let mut report = PreprocessReport {
        rows_in: ds.len(),
        ..Default::default()
    };
    let (ds, empty) = filter_bands(ds);
    report.empty_spectra = empty;
    let (mut ds, dropped) = drop_invalid(ds);
    report.rows_dropped_negative_reflectance = dropped.negative_reflectance;
    report.rows_dropped_negative_yield = dropped.negative_yield;
    vegindex::compute_all_indices(&mut ds)?;
    let categoricals: Vec<String> = ds.categorical_names().map(str::to_string).collect();
    for c in categoricals {
        ds = one_hot(ds, &c)?;
    }
    let (ds, filled) = impute_missing(ds)?;
    report.cells_imputed = filled;
    report.rows_out = ds.len();
    report.feature_count = ds.feature_count();
    Ok((ds, report))
}
