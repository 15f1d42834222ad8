//! Central finite-difference check of the analytic gradient.

use serde::Serialize;

use crate::error::Result;
use crate::scalar::Scalar;

use super::backward::{batch_gradient, batch_loss, Example};
use super::params::ModelParams;

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Default pass threshold on the relative error.
pub const FD_TOLERANCE: f64 = 1e-4;
/// Lower bound on the relative-error denominator, so coordinates whose true gradient is
/// zero are judged on absolute error instead of amplified round-off.
pub const FD_DENOM_FLOOR: f64 = 1e-6;

/// `|a − b| / max(|a|, |b|, FD_DENOM_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_DENOM_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoordinateMismatch {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub coordinates: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub failures: Vec<CoordinateMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares every coordinate of the analytic batch gradient against central differences.
pub fn check_gradients<F: Scalar>(
    params: &ModelParams<F>,
    batch: &[Example],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (_, grad) = batch_gradient(params, batch)?;
    let analytic: Vec<(String, Vec<F>)> = grad.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
    let mut probe = params.clone();
    let h = F::of(step);
    let mut report = GradCheckReport { coordinates: 0, max_relative_error: 0.0, tolerance, failures: Vec::new() };
    for (ti, (name, g)) in analytic.iter().enumerate() {
        for (c, &a) in g.iter().enumerate() {
            let orig = probe.tensors_mut()[ti][c];
            probe.tensors_mut()[ti][c] = orig + h;
            let plus = batch_loss(&probe, batch)?;
            probe.tensors_mut()[ti][c] = orig - h;
            let minus = batch_loss(&probe, batch)?;
            probe.tensors_mut()[ti][c] = orig;
            let numeric = (plus - minus).as_f64() / (2.0 * step);
            let err = relative_error(a.as_f64(), numeric);
            report.coordinates += 1;
            report.max_relative_error = report.max_relative_error.max(err);
            if err.is_nan() || err > tolerance {
                report.failures.push(CoordinateMismatch {
                    tensor: name.clone(),
                    index: c,
                    analytic: a.as_f64(),
                    numeric,
                    relative_error: err,
                });
            }
        }
    }
    Ok(report)
}
