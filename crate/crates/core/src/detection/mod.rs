//! Anomaly segment detection on the alarm series: growth-ratio overload
//! rule, window autoencoder, robust sigma rule and their fusion.

mod autoencoder;
mod fusion;
mod sigma;
mod trend;

use serde::{Deserialize, Serialize};

use crate::decomposition::{stl_decompose_values, Decomposition, StlConfig};
use crate::error::{KpiError, Result};
use crate::series::{mean_std, paa, segment_of, znormalize_values, PaaVector};

pub use autoencoder::{
    component_anomaly_scores, detect_component_anomalies, train_reconstruction_detector, AutoencoderParams, ReconstructionDetector,
    TrainingStats,
};
pub use fusion::{anomaly_runs, fuse_anomaly_indices, paa_span_to_samples, segments_from_indices, to_paa_indices};
pub use sigma::{robust_sigma_detect, robust_sigma_scores, MAD_TO_SIGMA};
pub use trend::{
    detect_trend_overload, detect_trend_overload_values, trend_ratio_scores, trend_ratio_scores_values, TrendRatios,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Trend,
    Seasonal,
    Residual,
    Fused,
}

/// Half-open interval `[t_s, t_e)` in PAA coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySegment {
    pub t_s: usize,
    pub t_e: usize,
    pub kind: SegmentKind,
    pub score: f64,
}

impl AnomalySegment {
    pub fn len(&self) -> usize {
        self.t_e - self.t_s
    }

    pub fn is_empty(&self) -> bool {
        self.t_e <= self.t_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Growth-ratio threshold.
    pub gamma: f64,
    /// Window length of the growth ratio, in PAA points.
    pub lag_l: usize,
    /// Robust-sigma multiplier for the residual component.
    pub sigma_k: f64,
    /// Autoencoder window, in samples.
    pub window_length: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Largest index gap bridged when grouping flagged PAA points.
    pub max_gap: usize,
    /// Cap on training windows (evenly spaced) per detector.
    pub max_train_windows: usize,
    /// Runs whose summed severity falls below this fraction of the heaviest
    /// run are set aside, as are points inside a kept run below this
    /// fraction of the run peak; 0 keeps everything.
    pub severity_ratio: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            lag_l: 5,
            sigma_k: 3.0,
            window_length: 24,
            epochs: 500,
            learning_rate: 0.01,
            seed: 0,
            max_gap: 2,
            max_train_windows: 256,
            severity_ratio: 0.5,
        }
    }
}

impl DetectorConfig {
    /// Defaults with the autoencoder window tied to the period, kept within
    /// `[8, 32]`.
    pub fn for_period(period: usize) -> Self {
        Self {
            window_length: period.clamp(8, 32),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) {
            return Err(KpiError::param(format!("gamma {} must exceed 1", self.gamma)));
        }
        if self.lag_l == 0 {
            return Err(KpiError::param("trend lag must be at least 1"));
        }
        if !(self.sigma_k > 0.0) {
            return Err(KpiError::param(format!("sigma_k {} must be positive", self.sigma_k)));
        }
        if self.window_length < 4 {
            return Err(KpiError::param(format!(
                "autoencoder window {} must be at least 4",
                self.window_length
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(KpiError::param("learning rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.severity_ratio) {
            return Err(KpiError::param(format!(
                "severity ratio {} must lie in [0, 1]",
                self.severity_ratio
            )));
        }
        if self.max_train_windows < 2 {
            return Err(KpiError::param("max_train_windows must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    /// STL split with one detector family per component.
    Decomposition,
    /// Growth-ratio rule on the raw alarm only.
    TrendOnly,
}

/// Per-component flags (sample coordinates) and the fused result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmDetection {
    pub mode: DetectionMode,
    pub trend_indices: Vec<usize>,
    pub seasonal_indices: Vec<usize>,
    pub residual_indices: Vec<usize>,
    /// Union of the component flags, sample coordinates.
    pub fused_samples: Vec<usize>,
    /// Flagged PAA points.
    pub paa_indices: Vec<usize>,
    /// Flagged PAA points inside the retained runs; symbols are compared
    /// here.
    pub focus_indices: Vec<usize>,
    /// Retained runs widened for the F test, scored by peak severity.
    pub segments: Vec<AnomalySegment>,
    /// Runs dropped as too light next to the heaviest one, scored by mass.
    pub background: Vec<AnomalySegment>,
}

/// Growth-ratio overloads of `values` (standardized by `mean`/`std`) as a
/// per-sample severity `r / gamma` over each overload span.
fn overload_scores(values: &[f64], mean: f64, std: f64, w: usize, cfg: &DetectorConfig) -> Result<Vec<f64>> {
    let scale = if std > 0.0 { std } else { 1.0 };
    let z: Vec<f64> = values.iter().map(|v| (v - mean) / scale).collect();
    let p: PaaVector = paa(&z, w)?;
    let mut scores = vec![0.0; values.len()];
    for seg in detect_trend_overload(&p, cfg)? {
        for i in paa_span_to_samples(&p.segment_bounds, seg.t_s, seg.t_e) {
            scores[i] = f64::max(scores[i], seg.score / cfg.gamma);
        }
    }
    Ok(scores)
}

fn autoencoder_scores(component: &[f64], cfg: &DetectorConfig) -> Result<Vec<f64>> {
    let det = train_reconstruction_detector(component, cfg)?;
    Ok(component_anomaly_scores(component, &det))
}

fn elementwise_max(mut a: Vec<f64>, b: &[f64]) -> Vec<f64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x = x.max(*y);
    }
    a
}

fn flagged(scores: &[f64]) -> Vec<usize> {
    scores.iter().enumerate().filter(|(_, &s)| s > 0.0).map(|(i, _)| i).collect()
}

/// Runs the detector stack on the alarm, fuses the flags, keeps the runs of
/// flagged PAA points whose summed severity reaches `cfg.severity_ratio`
/// times the heaviest run, trims weak points inside them, and widens the
/// rest into segments of at least `min_len` points.
pub fn detect_alarm(
    alarm: &[f64],
    w: usize,
    stl: &StlConfig,
    cfg: &DetectorConfig,
    mode: DetectionMode,
    min_len: usize,
) -> Result<(AlarmDetection, Option<Decomposition>)> {
    cfg.validate()?;
    let n = alarm.len();
    let (mean, std) = mean_std(alarm);
    let degenerate = !(std > 1e-12 * mean.abs().max(1.0));
    let zeros = || vec![0.0; n];
    let (trend, seasonal, residual, decomposition) = match mode {
        DetectionMode::TrendOnly => {
            let scores = if degenerate {
                zeros()
            } else {
                let z = znormalize_values(alarm);
                overload_scores(&z.values, 0.0, 1.0, w, cfg)?
            };
            (scores, zeros(), zeros(), None)
        }
        DetectionMode::Decomposition => {
            let d = stl_decompose_values(alarm, stl)?;
            if degenerate {
                (zeros(), zeros(), zeros(), Some(d))
            } else {
                // the seasonal detector sees whole cycles
                let seasonal_cfg = DetectorConfig {
                    window_length: stl.period.min(n / 4).max(4),
                    ..cfg.clone()
                };
                let (trend, (seasonal, residual)) = rayon::join(
                    || -> Result<Vec<f64>> {
                        let ratio = overload_scores(&d.trend, mean, std, w, cfg)?;
                        Ok(elementwise_max(ratio, &autoencoder_scores(&d.trend, cfg)?))
                    },
                    || {
                        rayon::join(
                            || autoencoder_scores(&d.seasonal, &seasonal_cfg),
                            || -> Result<Vec<f64>> {
                                let sigma = robust_sigma_scores(&d.residual, cfg.sigma_k)?;
                                Ok(elementwise_max(sigma, &autoencoder_scores(&d.residual, cfg)?))
                            },
                        )
                    },
                );
                (trend?, seasonal?, residual?, Some(d))
            }
        }
    };
    let (trend_indices, seasonal_indices, residual_indices) = (flagged(&trend), flagged(&seasonal), flagged(&residual));
    let fused_samples = fuse_anomaly_indices(&trend_indices, &seasonal_indices, &residual_indices);
    let paa_indices = to_paa_indices(&fused_samples, n, w);

    // severity of each PAA point: strongest component score among its samples
    let severity = elementwise_max(elementwise_max(trend, &seasonal), &residual);
    let mut point_severity = vec![0.0f64; w];
    for &i in &fused_samples {
        let j = segment_of(n, w, i);
        point_severity[j] = point_severity[j].max(severity[i]);
    }
    // contiguous runs weighed by their total severity; inside a kept run,
    // points well below its peak are dropped too
    let runs = anomaly_runs(&paa_indices, 1, w);
    let mass: Vec<f64> = runs.iter().map(|&(a, b)| point_severity[a..b].iter().sum()).collect();
    let heaviest = mass.iter().copied().fold(0.0, f64::max);
    let mut focus_indices = Vec::new();
    let mut background = Vec::new();
    for (&(a, b), &m) in runs.iter().zip(&mass) {
        let peak = point_severity[a..b].iter().copied().fold(0.0, f64::max);
        if m >= cfg.severity_ratio * heaviest {
            focus_indices.extend((a..b).filter(|&i| point_severity[i] >= cfg.severity_ratio * peak));
        } else {
            background.push(AnomalySegment {
                t_s: a,
                t_e: b,
                kind: SegmentKind::Fused,
                score: m,
            });
        }
    }
    let mut segments = segments_from_indices(&focus_indices, cfg.max_gap, min_len, w);
    for seg in &mut segments {
        seg.score = point_severity[seg.t_s..seg.t_e].iter().copied().fold(0.0, f64::max);
    }
    Ok((
        AlarmDetection {
            mode,
            trend_indices,
            seasonal_indices,
            residual_indices,
            fused_samples,
            paa_indices,
            focus_indices,
            segments,
            background,
        },
        decomposition,
    ))
}
