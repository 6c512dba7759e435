//! Hyperspectral vegetation indices.
//!
//! Spectra are resampled by linear interpolation; the catalog holds 52
//! band-arithmetic indices (`Txxx` is the reflectance at `xxx` nm). Formulas
//! are implemented exactly as catalogued, including the near-duplicates
//! (`GNDVI`/`NDVI2`, `SR1`/`SRPI`), so the feature table always carries 52
//! columns. A zero denominator yields `NaN`, which downstream imputation
//! treats as a missing cell.

use std::io::Write;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Reflectance samples with strictly increasing wavelengths (nm).
#[derive(Debug, Clone, PartialEq)]
pub struct BandSpectrum {
    samples: Vec<(f64, f64)>,
}

impl BandSpectrum {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples
            .iter()
            .any(|&(w, r)| !w.is_finite() || !r.is_finite())
        {
            return Err(Error::Domain("spectrum contains non-finite samples".into()));
        }
        if samples.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Domain(
                "spectrum wavelengths must be strictly increasing".into(),
            ));
        }
        Ok(BandSpectrum { samples })
    }

    /// Samples `f(λ)` at each wavelength.
    pub fn from_fn(
        wavelengths: impl IntoIterator<Item = f64>,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        Self::new(wavelengths.into_iter().map(|w| (w, f(w))).collect())
    }

    /// Every band at reflectance `r`, sampled each nanometre over 400–1000.
    pub fn flat(r: f64) -> Self {
        Self::from_fn((400..=1000).map(f64::from), |_| r).expect("flat spectrum is valid")
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Linear interpolation between the bracketing samples; exact samples
    /// are returned unchanged.
    pub fn reflectance_at(&self, wavelength: f64) -> Result<f64> {
        let (Some(first), Some(last)) = (self.samples.first(), self.samples.last()) else {
            return Err(Error::Domain("empty spectrum".into()));
        };
        if !(first.0..=last.0).contains(&wavelength) {
            return Err(Error::Extrapolation {
                wavelength,
                min: first.0,
                max: last.0,
            });
        }
        match self
            .samples
            .binary_search_by(|s| s.0.total_cmp(&wavelength))
        {
            Ok(i) => Ok(self.samples[i].1),
            Err(i) => {
                let (w0, r0) = self.samples[i - 1];
                let (w1, r1) = self.samples[i];
                let t = (wavelength - w0) / (w1 - w0);
                Ok(r0 + t * (r1 - r0))
            }
        }
    }

    /// Multiplies every reflectance by `k`.
    pub fn scaled(&self, k: f64) -> BandSpectrum {
        BandSpectrum {
            samples: self.samples.iter().map(|&(w, r)| (w, r * k)).collect(),
        }
    }
}

/// Reflectance lookup handed to index formulas.
pub struct Bands<'a> {
    wavelengths: &'static [u32],
    values: &'a [f64],
}

impl Bands<'_> {
    /// Reflectance at `nm`; the wavelength must be declared by the index.
    #[inline]
    pub fn t(&self, nm: u32) -> f64 {
        let i = self
            .wavelengths
            .iter()
            .position(|&w| w == nm)
            .unwrap_or_else(|| panic!("band {nm} not declared by index"));
        self.values[i]
    }
}

/// One catalog entry.
pub struct IndexDef {
    pub name: &'static str,
    pub full_name: &'static str,
    /// Every wavelength the formula reads.
    pub bands: &'static [u32],
    pub formula: fn(&Bands) -> f64,
    /// Normalized difference `(a − b)/(a + b)`; bounded in [−1, 1] and
    /// invariant to spectrum scaling for positive reflectance.
    pub normalized_difference: bool,
}

impl std::fmt::Debug for IndexDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IndexDef")
            .field("name", &self.name)
            .field("bands", &self.bands)
            .finish()
    }
}

/// `a / b`, with `NaN` for a zero denominator.
#[inline]
fn div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        f64::NAN
    } else {
        a / b
    }
}

#[inline]
fn nd(a: f64, b: f64) -> f64 {
    div(a - b, a + b)
}

macro_rules! index {
    ($name:literal, $full:literal, [$($w:literal),*], nd, |$t:ident| $body:expr) => {
        IndexDef { name: $name, full_name: $full, bands: &[$($w),*], formula: |$t| $body, normalized_difference: true }
    };
    ($name:literal, $full:literal, [$($w:literal),*], |$t:ident| $body:expr) => {
        IndexDef { name: $name, full_name: $full, bands: &[$($w),*], formula: |$t| $body, normalized_difference: false }
    };
}

pub static CATALOG: [IndexDef; 52] = [
    index!("CI", "Curvature index", [675, 690, 683], |t| div(
        t.t(675) * t.t(690),
        t.t(683).powi(2)
    )),
    index!("CIre", "Chlorophyll index red-edge", [750, 710], |t| div(
        t.t(750),
        t.t(710)
    )
        - 1.0),
    index!("Datt1", "Datt 1", [850, 710, 680], |t| div(
        t.t(850) - t.t(710),
        t.t(850) - t.t(680)
    )),
    index!("Datt4", "Datt 4", [672, 550, 708], |t| div(
        t.t(672),
        t.t(550) * t.t(708)
    )),
    index!("Datt6", "Datt 6", [860, 550, 708], |t| div(
        t.t(860),
        t.t(550) * t.t(708)
    )),
    index!(
        "DDI",
        "Double difference index",
        [749, 720, 701, 672],
        |t| (t.t(749) - t.t(720)) - (t.t(701) - t.t(672))
    ),
    index!("DPI", "Double peak index", [688, 710, 697], |t| div(
        t.t(688) + t.t(710),
        t.t(697).powi(2)
    )),
    index!("Gitelson2", "Gitelson 2", [750, 800, 695, 740], |t| div(
        t.t(750) - t.t(800),
        t.t(695) - t.t(740)
    ) - 1.0),
    index!(
        "GNDVI",
        "Green normalized difference vegetation index",
        [750, 550],
        nd,
        |t| nd(t.t(750), t.t(550))
    ),
    index!(
        "MCARI",
        "Modified chlorophyll absorption ratio index",
        [700, 670, 550],
        |t| { ((t.t(700) - t.t(670)) - 0.2 * (t.t(700) - t.t(550))) * div(t.t(700), t.t(670)) }
    ),
    index!(
        "MCARI3",
        "Modified chlorophyll absorption ratio index 3",
        [750, 710, 550, 715],
        |t| { ((t.t(750) - t.t(710)) - 0.2 * (t.t(750) - t.t(550))) * div(t.t(750), t.t(715)) }
    ),
    index!(
        "MND1",
        "Modified normalized difference 1",
        [800, 680, 445],
        |t| { div(t.t(800) - t.t(680), t.t(800) + t.t(680) - 2.0 * t.t(445)) }
    ),
    index!(
        "MND2",
        "Modified normalized difference 2",
        [750, 705, 445],
        |t| { div(t.t(750) - t.t(705), t.t(750) + t.t(705) - 2.0 * t.t(445)) }
    ),
    index!("mSR", "Modified simple ratio", [800, 445, 680], |t| div(
        t.t(800) - t.t(445),
        t.t(680) - t.t(445)
    )),
    index!("mSR2", "Modified simple ratio 2", [750, 705], |t| {
        let ratio = div(t.t(750), t.t(705));
        div(ratio - 1.0, (ratio + 1.0).sqrt())
    }),
    index!(
        "MTCI",
        "MERIS terrestrial chlorophyll index",
        [754, 709, 681],
        |t| div(t.t(754) - t.t(709), t.t(709) - t.t(681))
    ),
    index!(
        "MTVI1",
        "Modified triangular vegetation index 1",
        [800, 550, 670],
        |t| { 1.2 * (1.2 * (t.t(800) - t.t(550)) - 2.5 * (t.t(670) - t.t(550))) }
    ),
    index!(
        "ND1",
        "Normalized difference 550/531",
        [550, 531],
        nd,
        |t| nd(t.t(550), t.t(531))
    ),
    index!(
        "ND2",
        "Normalized difference 682/553",
        [682, 553],
        nd,
        |t| nd(t.t(682), t.t(553))
    ),
    index!(
        "NDchl",
        "Normalized difference chlorophyll",
        [925, 710],
        nd,
        |t| nd(t.t(925), t.t(710))
    ),
    index!(
        "NDRE",
        "Normalized difference red edge",
        [790, 720],
        nd,
        |t| nd(t.t(790), t.t(720))
    ),
    index!(
        "NDVI1",
        "Normalized difference vegetation index 1",
        [750, 650],
        nd,
        |t| nd(t.t(750), t.t(650))
    ),
    index!(
        "NDVI2",
        "Normalized difference vegetation index 2",
        [750, 550],
        nd,
        |t| nd(t.t(750), t.t(550))
    ),
    index!(
        "NDVI3",
        "Normalized difference vegetation index 3",
        [750, 710],
        nd,
        |t| nd(t.t(750), t.t(710))
    ),
    index!(
        "NPCI",
        "Normalized pigment chlorophyll index",
        [680, 430],
        nd,
        |t| nd(t.t(680), t.t(430))
    ),
    index!(
        "NPQI",
        "Normalized phaeophytinization index",
        [415, 435],
        nd,
        |t| nd(t.t(415), t.t(435))
    ),
    index!(
        "OSAVI",
        "Optimized soil-adjusted vegetation index",
        [800, 670],
        |t| { (1.0 + 0.16) * (t.t(800) - t.t(670)) * (t.t(800) + t.t(670) - 0.16) }
    ),
    index!("PBI", "Plant biochemical index", [810, 560], |t| div(
        t.t(810),
        t.t(560)
    )),
    index!("PPR", "Plant pigment ratio", [550, 450], nd, |t| nd(
        t.t(550),
        t.t(450)
    )),
    index!(
        "PRI",
        "Physiological reflectance index",
        [550, 530],
        nd,
        |t| nd(t.t(550), t.t(530))
    ),
    index!(
        "PSNDb1",
        "Pigment-specific normalized difference b1",
        [800, 650],
        nd,
        |t| nd(t.t(800), t.t(650))
    ),
    index!(
        "PSNDc1",
        "Pigment-specific normalized difference c1",
        [800, 500],
        nd,
        |t| nd(t.t(800), t.t(500))
    ),
    index!(
        "PSNDc2",
        "Pigment-specific normalized difference c2",
        [800, 470],
        nd,
        |t| nd(t.t(800), t.t(470))
    ),
    index!(
        "PSRI",
        "Plant senescence reflectance index",
        [678, 500, 750],
        |t| div(t.t(678) - t.t(500), t.t(750))
    ),
    index!(
        "PSSRc1",
        "Pigment-specific simple ratio c1",
        [800, 500],
        |t| div(t.t(800), t.t(500))
    ),
    index!(
        "PSSRc2",
        "Pigment-specific simple ratio c2",
        [800, 740],
        |t| div(t.t(800), t.t(740))
    ),
    index!(
        "PVR",
        "Photosynthetic vigour ratio",
        [550, 650],
        nd,
        |t| nd(t.t(550), t.t(650))
    ),
    index!("PWI", "Plant water index", [970, 900], |t| div(
        t.t(970),
        t.t(900)
    )),
    index!(
        "RDVI",
        "Renormalized difference vegetation index",
        [800, 670],
        |t| { div(t.t(800) - t.t(670), (t.t(800) + t.t(670)).sqrt()) }
    ),
    index!(
        "RVSI",
        "Red-edge stress vegetation index",
        [718, 748, 733],
        |t| (t.t(718) + t.t(748)) / 2.0 - t.t(733)
    ),
    index!("SAVI", "Soil-adjusted vegetation index", [800, 670], |t| {
        1.16 * div(t.t(800) - t.t(670), t.t(800) + t.t(670) + 0.16)
    }),
    index!(
        "SIPI",
        "Structure insensitive pigment index",
        [800, 445, 680],
        |t| div(t.t(800) - t.t(445), t.t(800) + t.t(680))
    ),
    index!("SR1", "Simple ratio 1", [430, 680], |t| div(
        t.t(430),
        t.t(680)
    )),
    index!("SR2", "Simple ratio 2", [440, 740], |t| div(
        t.t(440),
        t.t(740)
    )),
    index!("SR3", "Simple ratio 3", [550, 672], |t| div(
        t.t(550),
        t.t(672)
    )),
    index!("SR4", "Simple ratio 4", [550, 750], |t| div(
        t.t(550),
        t.t(750)
    )),
    index!("DSWI-4", "Disease-water stress index 4", [550, 680], |t| {
        div(t.t(550), t.t(680))
    }),
    index!("SRPI", "Simple ratio pigment index", [430, 680], |t| div(
        t.t(430),
        t.t(680)
    )),
    index!(
        "TCARI",
        "Transformed chlorophyll absorption ratio",
        [700, 670, 550],
        |t| {
            3.0 * ((t.t(700) - t.t(670)) - 0.2 * (t.t(700) - t.t(550)) * div(t.t(700), t.t(670)))
        }
    ),
    index!(
        "TCI",
        "Triangular chlorophyll index",
        [700, 550, 670],
        |t| {
            1.2 * (t.t(700) - t.t(550))
                - 1.5 * (t.t(670) - t.t(550)) * div(t.t(700), t.t(670)).sqrt()
        }
    ),
    index!("TVI", "Triangular vegetation index", [750, 550, 670], |t| {
        0.5 * (120.0 * (t.t(750) - t.t(550)) - 200.0 * (t.t(670) - t.t(550)))
    }),
    index!("WBI", "Water band index", [970, 902], |t| div(
        t.t(970),
        t.t(902)
    )),
];

pub fn catalog() -> &'static [IndexDef] {
    &CATALOG
}

pub fn index_names() -> impl Iterator<Item = &'static str> {
    CATALOG.iter().map(|d| d.name)
}

pub fn find_index(name: &str) -> Result<&'static IndexDef> {
    CATALOG
        .iter()
        .find(|d| d.name == name)
        .ok_or_else(|| Error::UnknownIndex(name.to_string()))
}

impl IndexDef {
    /// Evaluates the formula. Non-finite results collapse to `NaN`.
    pub fn evaluate(&self, spectrum: &BandSpectrum) -> Result<f64> {
        let mut values = [0.0f64; 8];
        for (slot, &w) in values.iter_mut().zip(self.bands) {
            *slot = spectrum.reflectance_at(f64::from(w))?;
        }
        let bands = Bands {
            wavelengths: self.bands,
            values: &values[..self.bands.len()],
        };
        let v = (self.formula)(&bands);
        Ok(if v.is_finite() { v } else { f64::NAN })
    }
}

pub fn compute_index(name: &str, spectrum: &BandSpectrum) -> Result<f64> {
    find_index(name)?.evaluate(spectrum)
}

/// All 52 indices for one spectrum, catalog order. Unresolvable bands give
/// `NaN` rather than an error.
pub fn index_row(spectrum: &BandSpectrum) -> Vec<f64> {
    CATALOG
        .iter()
        .map(|d| d.evaluate(spectrum).unwrap_or(f64::NAN))
        .collect()
}

/// Summary of an index pass over a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexReport {
    /// Records whose spectrum was empty or unusable; all their indices are missing.
    pub flagged_rows: Vec<usize>,
    /// Cells set missing (zero denominators, uncovered bands, flagged rows).
    pub missing_cells: usize,
}

/// Appends the 52 catalog columns to the feature table.
pub fn compute_all_indices(ds: &mut Dataset) -> Result<IndexReport> {
    let mut report = IndexReport::default();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(ds.len()); CATALOG.len()];
    for (i, rec) in ds.records.iter().enumerate() {
        let row = match BandSpectrum::new(rec.spectrum.clone()) {
            Ok(s) if !s.is_empty() => index_row(&s),
            _ => {
                report.flagged_rows.push(i);
                vec![f64::NAN; CATALOG.len()]
            }
        };
        report.missing_cells += row.iter().filter(|v| v.is_nan()).count();
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    for (def, values) in CATALOG.iter().zip(columns) {
        ds.push_column(def.name, values)?;
    }
    Ok(report)
}

/// Pearson correlation over rows where both values are finite. Returns
/// `NaN` when fewer than two such rows exist or either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a, b))
        .collect();
    if pairs.len() < 2 {
        return f64::NAN;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Pairwise-complete Pearson matrix of the 52 index columns.
pub fn index_correlation_matrix(ds: &Dataset) -> Result<Matrix> {
    let columns: Vec<Vec<f64>> = CATALOG
        .iter()
        .map(|d| ds.column(d.name).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    let k = columns.len();
    let mut out = Matrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let r = if a == b {
                // Unit diagonal unless the column is degenerate.
                if pearson(&columns[a], &columns[a]).is_nan() {
                    f64::NAN
                } else {
                    1.0
                }
            } else {
                pearson(&columns[a], &columns[b])
            };
            out.set(a, b, r);
            out.set(b, a, r);
        }
    }
    Ok(out)
}

/// Writes a square matrix with index names on both axes; `NaN` as `NaN`.
pub fn write_correlation_csv(corr: &Matrix, path: &Path) -> Result<()> {
    let mut out = String::from("index");
    for name in index_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (r, name) in index_names().enumerate() {
        out.push_str(name);
        for c in 0..corr.cols() {
            out.push(',');
            out.push_str(&format_float(corr.get(r, c)));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Writes `plot_id` plus the 52 index columns.
pub fn write_indices_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let columns: Vec<&[f64]> = CATALOG
        .iter()
        .map(|d| ds.column(d.name))
        .collect::<Result<_>>()?;
    let mut out = String::from("plot_id");
    for name in index_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, rec) in ds.records.iter().enumerate() {
        out.push_str(&rec.plot_id);
        for col in &columns {
            out.push(',');
            out.push_str(&format_float(col[i]));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

pub(crate) fn format_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
