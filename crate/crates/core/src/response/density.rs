//! One-dimensional Gaussian kernel density estimation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ResponseError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDensity {
    pub grid: Vec<f64>,
    /// Normalized so the trapezoidal integral over `grid` is 1.
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

/// Linear-interpolation quantile of sorted data (`q` in [0, 1]).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `0.9 · min(σ, IQR / 1.34) · n^(-1/5)`.
///
/// When the interquartile range collapses but σ does not, σ alone is used.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64, ResponseError> {
    let n = values.len();
    if n < 2 {
        return Err(ResponseError::TooFewValues(n));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ResponseError::NonFinite);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sigma = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sigma.min(iqr / 1.34) } else { sigma };
    if !(spread > 0.0) {
        return Err(ResponseError::DegenerateSample);
    }
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

fn trapezoid(grid: &[f64], y: &[f64]) -> f64 {
    grid.windows(2)
        .zip(y.windows(2))
        .map(|(g, v)| (g[1] - g[0]) * (v[0] + v[1]) / 2.0)
        .sum()
}

/// Gaussian KDE with Silverman's bandwidth, evaluated on `grid` and
/// renormalized to unit trapezoidal mass there.
pub fn estimate_density(values: &[f64], grid: &[f64]) -> Result<KernelDensity, ResponseError> {
    let h = silverman_bandwidth(values)?;
    if grid.len() < 2 {
        return Err(ResponseError::BadGrid("need at least 2 points".into()));
    }
    if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ResponseError::BadGrid("must be finite and strictly increasing".into()));
    }
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * PI).sqrt());
    let mut density: Vec<f64> = grid
        .iter()
        .map(|g| {
            norm * values
                .iter()
                .map(|v| {
                    let u = (g - v) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();
    let mass = trapezoid(grid, &density);
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(ResponseError::BadGrid("grid carries no probability mass".into()));
    }
    density.iter_mut().for_each(|d| *d /= mass);
    Ok(KernelDensity {
        grid: grid.to_vec(),
        density,
        bandwidth: h,
    })
}
