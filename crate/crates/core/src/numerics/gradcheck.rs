use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Default central-difference step at 64-bit precision.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max_i |a_i - n_i| / max(1, |a_i|, |n_i|)`.
    pub max_rel_err: f64,
    /// Coordinate attaining the maximum.
    pub worst_index: usize,
    pub coordinates: usize,
}

/// Central-difference gradient of `loss` at `point`.
pub fn numeric_gradient<F>(mut loss: F, point: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Argument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = loss(&x);
        x[i] = orig - h;
        let minus = loss(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss while perturbing coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Compares an analytic gradient with central differences of `loss`.
pub fn finite_diff_check<F>(loss: F, point: &[f64], analytic: &[f64], h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if point.len() != analytic.len() {
        return Err(Error::shape("finite_diff_check", (point.len(), 1), (analytic.len(), 1)));
    }
    let numeric = numeric_gradient(loss, point, h)?;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        coordinates: point.len(),
    };
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        if !a.is_finite() {
            return Err(Error::NonFinite(format!("analytic gradient at coordinate {i}")));
        }
        let err = (a - n).abs() / f64::max(1.0, f64::max(a.abs(), n.abs()));
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}
