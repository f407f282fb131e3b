use serde::{Deserialize, Serialize};

use super::loess::fit_at;
use crate::error::{KpiError, Result};
use crate::series::KpiSeries;

/// Additive split `x = trend + seasonal + residual`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
    pub period: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StlConfig {
    pub period: usize,
    /// Cycle-subseries span, counted in cycles.
    pub seasonal_window: usize,
    /// Trend span, counted in samples.
    pub trend_window: usize,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
}

fn next_odd(x: f64) -> usize {
    let mut k = x.ceil() as usize;
    if k % 2 == 0 {
        k += 1;
    }
    k.max(3)
}

impl StlConfig {
    /// Canonical STL defaults for the given period.
    pub fn new(period: usize) -> Self {
        let seasonal_window = 7;
        Self {
            period,
            seasonal_window,
            trend_window: Self::default_trend_window(period, seasonal_window),
            inner_iterations: 2,
            outer_iterations: 1,
        }
    }

    /// Smallest odd integer >= 1.5 * period / (1 - 1.5 / seasonal_window).
    pub fn default_trend_window(period: usize, seasonal_window: usize) -> usize {
        next_odd(1.5 * period as f64 / (1.0 - 1.5 / seasonal_window as f64))
    }

    fn lowpass_window(&self) -> usize {
        next_odd(self.period as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(KpiError::param(format!("STL period {} must be at least 2", self.period)));
        }
        for (name, w) in [("seasonal", self.seasonal_window), ("trend", self.trend_window)] {
            if w < 3 || w % 2 == 0 {
                return Err(KpiError::param(format!("{name} window {w} must be odd and >= 3")));
            }
        }
        if self.inner_iterations == 0 {
            return Err(KpiError::param("inner_iterations must be at least 1"));
        }
        Ok(())
    }
}

pub fn stl_decompose(series: &KpiSeries, cfg: &StlConfig) -> Result<Decomposition> {
    stl_decompose_values(series.values(), cfg)
}

pub fn stl_decompose_values(y: &[f64], cfg: &StlConfig) -> Result<Decomposition> {
    cfg.validate()?;
    let n = y.len();
    let period = cfg.period;
    if n < 2 * period {
        return Err(KpiError::InsufficientData {
            needed: 2 * period,
            actual: n,
        });
    }

    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut robustness: Option<Vec<f64>> = None;

    for outer in 0..=cfg.outer_iterations {
        for _ in 0..cfg.inner_iterations {
            inner_pass(y, cfg, robustness.as_deref(), &mut trend, &mut seasonal);
        }
        if outer < cfg.outer_iterations {
            robustness = Some(bisquare_weights(y, &trend, &seasonal));
        }
    }

    // seasonal carries no level; its mean moves into the trend
    let mean_s = seasonal.iter().sum::<f64>() / n as f64;
    for (s, t) in seasonal.iter_mut().zip(trend.iter_mut()) {
        *s -= mean_s;
        *t += mean_s;
    }
    let residual = y
        .iter()
        .zip(&trend)
        .zip(&seasonal)
        .map(|((x, t), s)| x - t - s)
        .collect();
    Ok(Decomposition {
        trend,
        seasonal,
        residual,
        period,
    })
}

fn inner_pass(y: &[f64], cfg: &StlConfig, rw: Option<&[f64]>, trend: &mut [f64], seasonal: &mut [f64]) {
    let n = y.len();
    let period = cfg.period;
    let detrended: Vec<f64> = y.iter().zip(trend.iter()).map(|(a, b)| a - b).collect();

    // cycle-subseries smoothing, extended one cycle on each side
    let mut cycle = vec![0.0; n + 2 * period];
    let mut sub = Vec::with_capacity(n / period + 1);
    let mut sub_rw = Vec::with_capacity(n / period + 1);
    for phase in 0..period {
        sub.clear();
        sub_rw.clear();
        let mut i = phase;
        while i < n {
            sub.push(detrended[i]);
            if let Some(w) = rw {
                sub_rw.push(w[i]);
            }
            i += period;
        }
        let len = sub.len();
        let weights = rw.map(|_| sub_rw.as_slice());
        for k in -1..=len as isize {
            let v = fit_at(&sub, weights, k as f64, cfg.seasonal_window, 0);
            let pos = (k + 1) as usize * period + phase;
            if pos < cycle.len() {
                cycle[pos] = v;
            }
        }
    }

    // low-pass: MA(period), MA(period), MA(3), then Loess
    let ma1 = moving_average(&cycle, period);
    let ma2 = moving_average(&ma1, period);
    let ma3 = moving_average(&ma2, 3);
    debug_assert_eq!(ma3.len(), n);
    let lowpass_span = cfg.lowpass_window();
    for i in 0..n {
        let low = fit_at(&ma3, None, i as f64, lowpass_span, 1);
        seasonal[i] = cycle[period + i] - low;
    }

    let deseasonalized: Vec<f64> = y.iter().zip(seasonal.iter()).map(|(a, b)| a - b).collect();
    for (i, t) in trend.iter_mut().enumerate() {
        *t = fit_at(&deseasonalized, rw, i as f64, cfg.trend_window, 1);
    }
}

fn moving_average(x: &[f64], len: usize) -> Vec<f64> {
    let out_len = x.len() + 1 - len;
    let mut out = Vec::with_capacity(out_len);
    let mut acc: f64 = x[..len].iter().sum();
    out.push(acc / len as f64);
    for i in 1..out_len {
        acc += x[i + len - 1] - x[i - 1];
        out.push(acc / len as f64);
    }
    out
}

fn bisquare_weights(y: &[f64], trend: &[f64], seasonal: &[f64]) -> Vec<f64> {
    let abs_res: Vec<f64> = y
        .iter()
        .zip(trend)
        .zip(seasonal)
        .map(|((x, t), s)| (x - t - s).abs())
        .collect();
    let h = 6.0 * median(&abs_res);
    abs_res
        .iter()
        .map(|r| {
            if h <= 0.0 {
                return 1.0;
            }
            let u = r / h;
            if u < 1.0 {
                (1.0 - u * u).powi(2)
            } else {
                0.0
            }
        })
        .collect()
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
