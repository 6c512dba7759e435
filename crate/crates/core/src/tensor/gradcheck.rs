use crate::error::{Error, Result};

use super::Matrix;

/// Outcome of a central-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(parameter index, flat element index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

/// Compares `analytic` against central differences of `f` around `theta`.
///
/// Per coordinate the error is
/// `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`; the maximum
/// over all coordinates is reported.
pub fn finite_diff_check<F>(
    mut f: F,
    theta: &[Matrix],
    analytic: &[Matrix],
    eps: f64,
) -> Result<GradCheck>
where
    F: FnMut(&[Matrix]) -> Result<f64>,
{
    if theta.len() != analytic.len() {
        return Err(Error::Domain(format!(
            "{} parameters but {} gradients",
            theta.len(),
            analytic.len()
        )));
    }
    for (t, a) in theta.iter().zip(analytic) {
        if t.shape() != a.shape() {
            return Err(Error::Shape {
                op: "finite_diff_check",
                left: t.shape(),
                right: a.shape(),
            });
        }
    }
    let mut probe = theta.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for p in 0..theta.len() {
        for k in 0..theta[p].data().len() {
            let orig = theta[p].data()[k];
            probe[p].data_mut()[k] = orig + eps;
            let plus = f(&probe)?;
            probe[p].data_mut()[k] = orig - eps;
            let minus = f(&probe)?;
            probe[p].data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite objective while probing parameter {p}[{k}]"
                )));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[p].data()[k];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((p, k));
            }
        }
    }
    Ok(report)
}
