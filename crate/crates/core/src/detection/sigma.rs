use crate::decomposition::median;
use crate::error::{KpiError, Result};

/// Consistency factor turning a MAD into a Gaussian sigma estimate.
pub const MAD_TO_SIGMA: f64 = 1.4826;

/// Indices whose distance to the median exceeds `k` robust sigmas.
///
/// With a zero MAD every value that differs from the median is flagged;
/// differences at round-off level (relative to the largest magnitude) count
/// as zero.
pub fn robust_sigma_detect(x: &[f64], k: f64) -> Result<Vec<usize>> {
    Ok(robust_sigma_scores(x, k)?
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(i, _)| i)
        .collect())
}

/// Distance to the median over the cutoff for flagged points, 0 elsewhere.
pub fn robust_sigma_scores(x: &[f64], k: f64) -> Result<Vec<f64>> {
    if x.len() < 3 {
        return Err(KpiError::InsufficientData {
            needed: 3,
            actual: x.len(),
        });
    }
    if !(k > 0.0) {
        return Err(KpiError::param(format!("sigma multiplier {k} must be positive")));
    }
    let med = median(x);
    let dev: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&dev);
    let tol = 1e-9 * x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let cut = if mad > tol { k * MAD_TO_SIGMA * mad } else { tol };
    Ok(dev.iter().map(|&d| if d > cut { d / cut } else { 0.0 }).collect())
}
