use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Percentile `p ∈ [0, 100]` with linear interpolation between order
/// statistics at position `p/100 · (n - 1)`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Input("percentile of an empty list".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Input(format!("percentile {p} outside [0, 100]")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("percentile of a list containing NaN".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`; zero
/// for a single value).
pub fn mean_stderr(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Input("mean of an empty list".into()));
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((m, 0.0));
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((m, (var / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub rmse_mean: f64,
    pub rmse_stderr: f64,
    /// Absent when no test fold carried intervention sets.
    pub class_error_p10: Option<f64>,
    pub class_error_p50: Option<f64>,
    pub class_error_p90: Option<f64>,
}

impl Aggregates {
    pub fn from_lists(rmse: &[f64], class_error: &[f64]) -> Result<Self> {
        let (rmse_mean, rmse_stderr) = mean_stderr(rmse)?;
        let pct = |p| if class_error.is_empty() { Ok(None) } else { percentile(class_error, p).map(Some) };
        Ok(Self {
            rmse_mean,
            rmse_stderr,
            class_error_p10: pct(10.0)?,
            class_error_p50: pct(50.0)?,
            class_error_p90: pct(90.0)?,
        })
    }
}
