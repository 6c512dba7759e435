//! Seeded stand-in for a multi-field soybean yield trial.
//!
//! Plots sit on a row-column grid per field. The latent yield of a plot is
//!
//! ```text
//! s = field baseline + population effect + spatial field (Gaussian bumps)
//! ```
//!
//! A canopy vigour score `v = z(s) + u` (z-scored latent plus an independent
//! plot-level term `u`) shapes the reflectance spectrum: a deeper red well,
//! a brighter NIR plateau and a red-edge shift, so NDVI-like indices track
//! `v`. The recorded yield at 13 % moisture is `s + β·v + noise`, converted
//! to a harvest moisture drawn around 13 %. Soil rasters share part of the
//! spatial field and are smoothed with the 3×3 moving mean.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::preprocess::{smooth_soil_grid, REFERENCE_MOISTURE_PCT};
use super::{Dataset, PlotRecord, Timepoint, SOIL_COLUMNS};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Plot width in metres (both trial types).
pub const PLOT_WIDTH_M: f64 = 1.52;
/// Gap between neighbouring plots in metres.
pub const PLOT_SPACING_M: f64 = 0.91;
const METRES_PER_DEGREE_LAT: f64 = 111_320.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrialType {
    /// Preliminary yield trial, 2.13 m plots.
    Pyt,
    /// Advanced yield trial, 5.18 m plots.
    Ayt,
}

impl TrialType {
    pub fn plot_length_m(self) -> f64 {
        match self {
            TrialType::Pyt => 2.13,
            TrialType::Ayt => 5.18,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub plots_per_field: Vec<usize>,
    /// Cycled when shorter than the field list.
    pub trial_types: Vec<TrialType>,
    /// Distinct genetic populations planted in each field.
    pub populations_per_field: usize,
    /// Scales both yield noise and spectral measurement noise; 0 disables both.
    pub noise_level: f64,
    /// β: kg/ha of yield per unit of canopy vigour.
    pub ndvi_effect: f64,
    pub vigor_sd: f64,
    pub field_baseline_mean: f64,
    pub field_baseline_sd: f64,
    pub population_effect_sd: f64,
    pub spatial_sd: f64,
    pub bumps_per_field: usize,
    pub yield_noise_sd: f64,
    pub spectral_noise_sd: f64,
    pub band_start_nm: u32,
    pub band_end_nm: u32,
    pub band_step_nm: u32,
    pub missing_soil_fraction: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    /// East-west gap between consecutive fields, metres.
    pub field_gap_m: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            plots_per_field: vec![770, 912, 800, 679],
            trial_types: vec![
                TrialType::Pyt,
                TrialType::Pyt,
                TrialType::Ayt,
                TrialType::Ayt,
            ],
            populations_per_field: 40,
            noise_level: 1.0,
            ndvi_effect: 150.0,
            vigor_sd: 0.3,
            field_baseline_mean: 3400.0,
            field_baseline_sd: 250.0,
            population_effect_sd: 300.0,
            spatial_sd: 150.0,
            bumps_per_field: 6,
            yield_noise_sd: 150.0,
            spectral_noise_sd: 0.004,
            band_start_nm: 350,
            band_end_nm: 1000,
            band_step_nm: 5,
            missing_soil_fraction: 0.01,
            origin_lat: 42.0308,
            origin_lon: -93.6319,
            field_gap_m: 150.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.plots_per_field.is_empty() || self.plots_per_field.contains(&0) {
            return bad("every field needs a positive plot count");
        }
        if self.populations_per_field == 0 {
            return bad("populations_per_field must be positive");
        }
        if self.trial_types.is_empty() {
            return bad("trial_types must not be empty");
        }
        if self.band_step_nm == 0 || self.band_start_nm > self.band_end_nm {
            return bad("band range must be non-empty with a positive step");
        }
        for (name, v) in [
            ("noise_level", self.noise_level),
            ("vigor_sd", self.vigor_sd),
            ("field_baseline_sd", self.field_baseline_sd),
            ("population_effect_sd", self.population_effect_sd),
            ("spatial_sd", self.spatial_sd),
            ("yield_noise_sd", self.yield_noise_sd),
            ("spectral_noise_sd", self.spectral_noise_sd),
            ("field_gap_m", self.field_gap_m),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.missing_soil_fraction) {
            return bad("missing_soil_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn total_plots(&self) -> usize {
        self.plots_per_field.iter().sum()
    }
}

struct Bump {
    x: f64,
    y: f64,
    sigma: f64,
    amplitude: f64,
}

/// Soil attribute `(mean, sd)` pairs in `SOIL_COLUMNS` order.
const SOIL_PRIORS: [(f64, f64); 10] = [
    (2500.0, 300.0),
    (20.0, 3.0),
    (150.0, 20.0),
    (400.0, 50.0),
    (4.0, 0.5),
    (25.0, 5.0),
    (6.5, 0.3),
    (28.0, 3.0),
    (20.0, 4.0),
    (52.0, 4.0),
];

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Canopy reflectance at `nm` for vigour `v`.
fn canopy_reflectance(nm: f64, v: f64) -> f64 {
    let nir = (0.35 + 0.05 * v).max(0.12);
    let red = (0.06 - 0.01 * v).max(0.015);
    let green = (0.09 + 0.005 * v).max(red);
    let edge_center = 715.0 + 4.0 * v;
    let visible = red + (green - red) * (-((nm - 550.0) / 45.0).powi(2)).exp();
    let s = 1.0 / (1.0 + (-(nm - edge_center) / 12.0).exp());
    let water = 1.0 - 0.12 * (-((nm - 970.0) / 25.0).powi(2)).exp();
    (visible * (1.0 - s) + nir * s) * water
}

struct PlotDraft {
    field: usize,
    row: usize,
    col: usize,
    x: f64,
    y: f64,
    population: usize,
    latent: f64,
    soil: [Option<f64>; 10],
}

/// Generates raw (unpreprocessed) plot records. Identical seeds give
/// identical datasets.
pub fn generate_synthetic_trial(config: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lon_scale = METRES_PER_DEGREE_LAT * config.origin_lat.to_radians().cos();

    let mut drafts: Vec<PlotDraft> = Vec::with_capacity(config.total_plots());
    let mut field_x0 = 0.0;
    for (f, &n_plots) in config.plots_per_field.iter().enumerate() {
        let trial = config.trial_types[f % config.trial_types.len()];
        let cols = (n_plots as f64).sqrt().ceil() as usize;
        let rows = n_plots.div_ceil(cols);
        let pitch_x = PLOT_WIDTH_M + PLOT_SPACING_M;
        let pitch_y = trial.plot_length_m() + PLOT_SPACING_M;
        let (width, height) = (cols as f64 * pitch_x, rows as f64 * pitch_y);

        let baseline = config.field_baseline_mean + config.field_baseline_sd * normal(&mut rng);
        let pop_effects: Vec<f64> = (0..config.populations_per_field)
            .map(|_| config.population_effect_sd * normal(&mut rng))
            .collect();
        let bumps: Vec<Bump> = (0..config.bumps_per_field)
            .map(|_| Bump {
                x: rng.random_range(0.0..width),
                y: rng.random_range(0.0..height),
                sigma: rng.random_range(10.0..30.0),
                amplitude: config.spatial_sd * normal(&mut rng),
            })
            .collect();
        let spatial = |x: f64, y: f64| -> f64 {
            bumps
                .iter()
                .map(|b| {
                    let r2 = (x - b.x).powi(2) + (y - b.y).powi(2);
                    b.amplitude * (-r2 / (2.0 * b.sigma * b.sigma)).exp()
                })
                .sum()
        };

        // Soil rasters over the full grid, smoothed before sampling.
        let soil_grids: Vec<Matrix> = SOIL_PRIORS
            .iter()
            .map(|&(mean, sd)| {
                let mut g = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..cols {
                        let sp = if config.spatial_sd > 0.0 {
                            spatial((c as f64 + 0.5) * pitch_x, (r as f64 + 0.5) * pitch_y)
                                / config.spatial_sd
                        } else {
                            0.0
                        };
                        g.set(r, c, mean + sd * (0.6 * sp + 0.8 * normal(&mut rng)));
                    }
                }
                smooth_soil_grid(&g)
            })
            .collect();

        for k in 0..n_plots {
            let (row, col) = (k / cols, k % cols);
            let x = field_x0 + (col as f64 + 0.5) * pitch_x;
            let y = (row as f64 + 0.5) * pitch_y;
            let population = rng.random_range(0..config.populations_per_field);
            let latent = baseline + pop_effects[population] + spatial(x - field_x0, y);
            let mut soil = [None; 10];
            for (s, grid) in soil.iter_mut().zip(&soil_grids) {
                let missing = rng.random::<f64>() < config.missing_soil_fraction;
                *s = (!missing).then(|| grid.get(row, col));
            }
            drafts.push(PlotDraft {
                field: f,
                row,
                col,
                x,
                y,
                population,
                latent,
                soil,
            });
        }
        field_x0 += width + config.field_gap_m;
    }

    let n = drafts.len() as f64;
    let mean = drafts.iter().map(|d| d.latent).sum::<f64>() / n;
    let sd = (drafts
        .iter()
        .map(|d| (d.latent - mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };

    let bands: Vec<f64> = (config.band_start_nm..=config.band_end_nm)
        .step_by(config.band_step_nm as usize)
        .map(f64::from)
        .collect();
    let noise = config.noise_level;

    let mut records = Vec::with_capacity(drafts.len());
    for d in &drafts {
        let vigor = (d.latent - mean) / sd + config.vigor_sd * normal(&mut rng);
        let yield13 = d.latent
            + config.ndvi_effect * vigor
            + noise * config.yield_noise_sd * normal(&mut rng);
        let moisture = (REFERENCE_MOISTURE_PCT + 1.5 * normal(&mut rng)).clamp(8.0, 20.0);
        let yield_raw = yield13 * (100.0 - REFERENCE_MOISTURE_PCT) / (100.0 - moisture);
        let brightness = 1.0 + 0.03 * noise * normal(&mut rng);
        let spectrum = bands
            .iter()
            .map(|&nm| {
                let value = if nm < 400.0 {
                    // Unreliable detector region: noisy, may go negative.
                    0.02 + 0.05 * normal(&mut rng)
                } else {
                    let clean = canopy_reflectance(nm, vigor) * brightness;
                    (clean + noise * config.spectral_noise_sd * normal(&mut rng)).max(1e-3)
                };
                (nm, value)
            })
            .collect();
        let lat = config.origin_lat + d.y / METRES_PER_DEGREE_LAT;
        let lon = config.origin_lon + d.x / lon_scale;
        records.push(PlotRecord {
            plot_id: format!("F{}-R{:02}C{:02}", d.field + 1, d.row + 1, d.col + 1),
            latitude: lat,
            longitude: lon,
            population: Some(format!("F{}P{:02}", d.field + 1, d.population + 1)),
            spectrum,
            soil: SOIL_COLUMNS
                .iter()
                .zip(d.soil)
                .map(|(name, v)| (name.to_string(), v))
                .collect::<BTreeMap<_, _>>(),
            weather: BTreeMap::new(),
            yield_raw: Some(yield_raw),
            moisture_pct: Some(moisture),
            timepoint: Some(Timepoint::T3),
            field_no: Some(d.field as u32 + 1),
        });
    }
    Dataset::from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            plots_per_field: vec![30, 25],
            populations_per_field: 4,
            ..Default::default()
        }
    }

    #[test]
    fn default_total_matches_field_sizes() {
        assert_eq!(
            SyntheticConfig::default().total_plots(),
            770 + 912 + 800 + 679
        );
        assert_eq!(SyntheticConfig::default().total_plots(), 3161);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_trial(&small(), 1).unwrap();
        let b = generate_synthetic_trial(&small(), 1).unwrap();
        assert!(a.same_contents(&b));
        let c = generate_synthetic_trial(&small(), 2).unwrap();
        assert!(!a.same_contents(&c));
    }

    #[test]
    fn rejects_bad_counts() {
        for cfg in [
            SyntheticConfig {
                plots_per_field: vec![],
                ..small()
            },
            SyntheticConfig {
                plots_per_field: vec![10, 0],
                ..small()
            },
            SyntheticConfig {
                populations_per_field: 0,
                ..small()
            },
        ] {
            assert!(matches!(
                generate_synthetic_trial(&cfg, 0),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn layout_and_ranges() {
        let ds = generate_synthetic_trial(&small(), 5).unwrap();
        assert_eq!(ds.len(), 55);
        for r in &ds.records {
            assert!(r.spectrum.first().unwrap().0 < 400.0);
            assert!(r
                .spectrum
                .iter()
                .filter(|s| s.0 >= 400.0)
                .all(|s| s.1 > 0.0));
            assert!(r.yield_raw.unwrap() > 0.0);
        }
        let ids: std::collections::BTreeSet<_> = ds.plot_ids().into_iter().collect();
        assert_eq!(ids.len(), 55);
    }

    #[test]
    fn adjacent_plots_follow_plot_pitch() {
        let ds = generate_synthetic_trial(&small(), 5).unwrap();
        let a = &ds.records[0];
        let b = &ds.records[1];
        let lon_scale = METRES_PER_DEGREE_LAT * small().origin_lat.to_radians().cos();
        let dx_m = (b.longitude - a.longitude) * lon_scale;
        assert!((dx_m - (PLOT_WIDTH_M + PLOT_SPACING_M)).abs() < 1e-6);
    }
}
