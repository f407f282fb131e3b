use crate::error::{KpiError, Result};

/// Local polynomial fit evaluated at abscissa `x0` over samples placed at
/// `0..y.len()`. Uses the `span` nearest samples (asymmetric at the
/// boundaries) with tricube weights, optionally multiplied by per-point
/// robustness weights. `span` may exceed `y.len()`; the bandwidth is then
/// widened as in classic STL.
pub(crate) fn fit_at(y: &[f64], robustness: Option<&[f64]>, x0: f64, span: usize, degree: u8) -> f64 {
    let n = y.len();
    let q = span.min(n);
    // nearest-q window, shifted inward near the ends
    let centre = x0.round().clamp(0.0, (n - 1) as f64) as isize;
    let mut lo = centre - (q as isize - 1) / 2;
    lo = lo.clamp(0, (n - q) as isize);
    let lo = lo as usize;
    let hi = lo + q - 1;

    let mut h = (x0 - lo as f64).max(hi as f64 - x0);
    if span > n {
        h += ((span - n) / 2) as f64;
    }
    // every point of the window keeps a positive weight
    h += 1.0;

    let weight = |j: usize| {
        let r = (j as f64 - x0).abs() / h;
        let t = 1.0 - r * r * r;
        let w = if r < 1.0 { t * t * t } else { 0.0 };
        robustness.map_or(w, |rw| w * rw[j])
    };

    let (mut sw, mut mean_x, mut mean_y) = (0.0, 0.0, 0.0);
    for j in lo..=hi {
        let wj = weight(j);
        sw += wj;
        mean_x += wj * j as f64;
        mean_y += wj * y[j];
    }
    if sw <= 0.0 {
        // every neighbour down-weighted to zero: plain mean
        return y[lo..=hi].iter().sum::<f64>() / q as f64;
    }
    mean_x /= sw;
    mean_y /= sw;
    if degree == 0 {
        return mean_y;
    }

    let (mut sxx, mut sxy) = (0.0, 0.0);
    for j in lo..=hi {
        let wj = weight(j);
        let dx = j as f64 - mean_x;
        sxx += wj * dx * dx;
        sxy += wj * dx * (y[j] - mean_y);
    }
    // slope is unidentifiable when the weighted abscissae collapse
    let range = (hi - lo) as f64;
    if sxx <= 1e-12 * sw * range * range || sxx <= 0.0 {
        return mean_y;
    }
    mean_y + sxy / sxx * (x0 - mean_x)
}

/// Loess smoother of `y` at its own abscissae.
pub fn loess_smooth(y: &[f64], span: usize, degree: u8, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = y.len();
    if span % 2 == 0 || span == 0 {
        return Err(KpiError::param(format!("Loess span {span} must be odd")));
    }
    if span > n {
        return Err(KpiError::param(format!("Loess span {span} exceeds series length {n}")));
    }
    if degree > 1 {
        return Err(KpiError::param(format!("Loess degree {degree} not supported (0 or 1)")));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(KpiError::param("robustness weights must match series length"));
        }
    }
    Ok((0..n).map(|i| fit_at(y, weights, i as f64, span, degree)).collect())
}
