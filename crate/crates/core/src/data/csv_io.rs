use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, PlotRecord, SOIL_COLUMNS};
use crate::error::{Error, Result};

/// Header names for the fixed plot columns. Soil columns are matched by
/// their canonical names, bands by integer wavelength headers, and anything
/// else is carried as a numeric weather column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub plot_id: String,
    pub latitude: String,
    pub longitude: String,
    pub population: String,
    pub yield_column: String,
    pub field_no: String,
    pub timepoint: String,
    pub moisture_pct: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            plot_id: "plot_id".into(),
            latitude: "latitude".into(),
            longitude: "longitude".into(),
            population: "population".into(),
            yield_column: "yield".into(),
            field_no: "field_no".into(),
            timepoint: "timepoint".into(),
            moisture_pct: "moisture_pct".into(),
        }
    }
}

enum Role {
    PlotId,
    Latitude,
    Longitude,
    Population,
    Yield,
    FieldNo,
    Timepoint,
    Moisture,
    Soil(&'static str),
    Band(f64),
    Weather(String),
}

fn classify(header: &str, schema: &CsvSchema) -> Role {
    let h = header.trim();
    if h == schema.plot_id {
        Role::PlotId
    } else if h == schema.latitude {
        Role::Latitude
    } else if h == schema.longitude {
        Role::Longitude
    } else if h == schema.population {
        Role::Population
    } else if h == schema.yield_column {
        Role::Yield
    } else if h == schema.field_no {
        Role::FieldNo
    } else if h == schema.timepoint {
        Role::Timepoint
    } else if h == schema.moisture_pct {
        Role::Moisture
    } else if let Some(s) = SOIL_COLUMNS.iter().find(|s| **s == h) {
        Role::Soil(s)
    } else if let Some(w) = h.parse::<u32>().ok().map(f64::from) {
        Role::Band(w)
    } else {
        Role::Weather(h.to_string())
    }
}

fn parse_num(cell: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let c = cell.trim();
    if c.is_empty() {
        return Ok(None);
    }
    c.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| Error::ParseCell {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        })
}

type RoleTest = fn(&Role) -> bool;

/// Reads a plot table. Rows are numbered from 1 (the first data row) in
/// error messages.
pub fn load_plots_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Domain(format!("{other:?}")),
        })?;
    let headers = reader.headers()?.clone();
    let roles: Vec<Role> = headers.iter().map(|h| classify(h, schema)).collect();
    let required: [(RoleTest, &String); 5] = [
        (|r: &Role| matches!(r, Role::PlotId), &schema.plot_id),
        (|r: &Role| matches!(r, Role::Latitude), &schema.latitude),
        (|r: &Role| matches!(r, Role::Longitude), &schema.longitude),
        (|r: &Role| matches!(r, Role::Population), &schema.population),
        (|r: &Role| matches!(r, Role::Yield), &schema.yield_column),
    ];
    for (required, name) in required {
        if !roles.iter().any(required) {
            return Err(Error::MissingColumn(name.clone()));
        }
    }
    // Band columns are visited in increasing wavelength order.
    let mut band_order: Vec<(f64, usize)> = roles
        .iter()
        .enumerate()
        .filter_map(|(i, r)| match r {
            Role::Band(w) => Some((*w, i)),
            _ => None,
        })
        .collect();
    band_order.sort_by(|a, b| a.0.total_cmp(&b.0));
    if band_order.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Domain("duplicate band column".into()));
    }

    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let row_no = idx + 1;
        let row = row?;
        let mut rec = PlotRecord {
            plot_id: String::new(),
            latitude: f64::NAN,
            longitude: f64::NAN,
            population: None,
            spectrum: Vec::with_capacity(band_order.len()),
            soil: BTreeMap::new(),
            weather: BTreeMap::new(),
            yield_raw: None,
            moisture_pct: None,
            timepoint: None,
            field_no: None,
        };
        for (col, (cell, role)) in row.iter().zip(&roles).enumerate() {
            let header = &headers[col];
            match role {
                Role::PlotId => rec.plot_id = cell.trim().to_string(),
                Role::Latitude => {
                    rec.latitude = parse_num(cell, row_no, header)?.unwrap_or(f64::NAN)
                }
                Role::Longitude => {
                    rec.longitude = parse_num(cell, row_no, header)?.unwrap_or(f64::NAN)
                }
                Role::Population => {
                    let c = cell.trim();
                    rec.population = (!c.is_empty()).then(|| c.to_string());
                }
                Role::Yield => rec.yield_raw = parse_num(cell, row_no, header)?,
                Role::Moisture => rec.moisture_pct = parse_num(cell, row_no, header)?,
                Role::FieldNo => {
                    let c = cell.trim();
                    rec.field_no = if c.is_empty() {
                        None
                    } else {
                        Some(c.parse().map_err(|_| Error::ParseCell {
                            row: row_no,
                            column: header.to_string(),
                            value: cell.to_string(),
                        })?)
                    };
                }
                Role::Timepoint => {
                    let c = cell.trim();
                    rec.timepoint = if c.is_empty() {
                        None
                    } else {
                        Some(c.parse().map_err(|_| Error::ParseCell {
                            row: row_no,
                            column: header.to_string(),
                            value: cell.to_string(),
                        })?)
                    };
                }
                Role::Soil(name) => {
                    rec.soil
                        .insert((*name).to_string(), parse_num(cell, row_no, header)?);
                }
                Role::Weather(name) => {
                    rec.weather
                        .insert(name.clone(), parse_num(cell, row_no, header)?);
                }
                Role::Band(_) => {}
            }
        }
        for &(w, col) in &band_order {
            if let Some(v) = parse_num(&row[col], row_no, &headers[col])? {
                rec.spectrum.push((w, v));
            }
        }
        if rec.plot_id.is_empty() {
            return Err(Error::InvalidRecord {
                row: row_no,
                message: "empty plot_id".into(),
            });
        }
        if !rec.latitude.is_finite() || !rec.longitude.is_finite() {
            return Err(Error::InvalidRecord {
                row: row_no,
                message: "missing coordinates".into(),
            });
        }
        records.push(rec);
    }
    Dataset::from_records(records)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Writes records in the ingest layout. Band columns are the union of all
/// record wavelengths; a record without a sample at some band leaves it empty.
pub fn write_plots_csv(records: &[PlotRecord], path: &Path) -> Result<()> {
    let mut bands: Vec<f64> = records
        .iter()
        .flat_map(|r| r.spectrum.iter().map(|s| s.0))
        .collect();
    bands.sort_by(f64::total_cmp);
    bands.dedup();
    if let Some(w) = bands.iter().find(|w| w.fract() != 0.0 || **w < 0.0) {
        return Err(Error::Domain(format!(
            "band {w} nm cannot be written as an integer column"
        )));
    }
    let soil: Vec<&str> = SOIL_COLUMNS
        .iter()
        .copied()
        .filter(|s| records.iter().any(|r| r.soil.contains_key(*s)))
        .collect();
    let weather: Vec<String> = records
        .iter()
        .flat_map(|r| r.weather.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut w = csv::WriterBuilder::new()
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Domain(format!("{other:?}")),
        })?;
    let mut header: Vec<String> = [
        "plot_id",
        "latitude",
        "longitude",
        "population",
        "field_no",
        "timepoint",
        "yield",
        "moisture_pct",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(soil.iter().map(|s| s.to_string()));
    header.extend(weather.iter().cloned());
    header.extend(bands.iter().map(|b| format!("{}", *b as u32)));
    w.write_record(&header)?;

    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for r in records {
        row.clear();
        row.push(r.plot_id.clone());
        row.push(format!("{}", r.latitude));
        row.push(format!("{}", r.longitude));
        row.push(r.population.clone().unwrap_or_default());
        row.push(r.field_no.map(|f| f.to_string()).unwrap_or_default());
        row.push(
            r.timepoint
                .map(|t| t.as_str().to_string())
                .unwrap_or_default(),
        );
        row.push(fmt_opt(r.yield_raw));
        row.push(fmt_opt(r.moisture_pct));
        for s in &soil {
            row.push(fmt_opt(r.soil.get(*s).copied().flatten()));
        }
        for name in &weather {
            row.push(fmt_opt(r.weather.get(name).copied().flatten()));
        }
        let mut k = 0;
        for b in &bands {
            while k < r.spectrum.len() && r.spectrum[k].0 < *b {
                k += 1;
            }
            if k < r.spectrum.len() && r.spectrum[k].0 == *b {
                row.push(format!("{}", r.spectrum[k].1));
            } else {
                row.push(String::new());
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes the model-ready table: `plot_id`, `target`, then every numeric
/// feature column in dataset order.
pub fn write_features_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["plot_id".to_string(), "target".to_string()];
    header.extend(ds.feature_names().iter().cloned());
    w.write_record(&header)?;
    for (i, rec) in ds.records.iter().enumerate() {
        let mut row = vec![
            rec.plot_id.clone(),
            crate::vegindex::format_float(ds.target[i]),
        ];
        row.extend(
            ds.columns()
                .iter()
                .map(|c| crate::vegindex::format_float(c[i])),
        );
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
