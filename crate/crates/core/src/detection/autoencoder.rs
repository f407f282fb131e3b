//! Dense encoder-decoder with one additive skip connection, trained on
//! sliding windows of a single component.
//!
//! Layout: `W -> ceil(W/2) -> ceil(W/4) -> ceil(W/2) -> W`, tanh hidden
//! units, linear output. The first hidden activation is added to the
//! third hidden activation before the output layer.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DetectorConfig;
use crate::error::{KpiError, Result};
use crate::series::mean_std;

pub const CHECKPOINT_FORMAT: &str = "kpiroot-reconstruction-detector";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Network parameters; weight matrices are stored `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
    pub w4: Array2<f64>,
    pub b4: Array1<f64>,
}

struct Forward {
    a1: Array2<f64>,
    a2: Array2<f64>,
    t3: Array2<f64>,
    a3: Array2<f64>,
    out: Array2<f64>,
}

impl AutoencoderParams {
    pub fn layer_widths(window: usize) -> [usize; 5] {
        let half = window.div_ceil(2);
        let quarter = window.div_ceil(4);
        [window, half, quarter, half, window]
    }

    /// Xavier-uniform initialization, zero biases.
    pub fn init(window: usize, rng: &mut impl Rng) -> Self {
        let [d0, d1, d2, d3, d4] = Self::layer_widths(window);
        let mut dense = |fan_out: usize, fan_in: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..limit))
        };
        let w1 = dense(d1, d0);
        let w2 = dense(d2, d1);
        let w3 = dense(d3, d2);
        let w4 = dense(d4, d3);
        Self {
            w1,
            b1: Array1::zeros(d1),
            w2,
            b2: Array1::zeros(d2),
            w3,
            b3: Array1::zeros(d3),
            w4,
            b4: Array1::zeros(d4),
        }
    }

    pub fn window(&self) -> usize {
        self.w1.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.flatten().len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out.extend(self.w3.iter());
        out.extend(self.b3.iter());
        out.extend(self.w4.iter());
        out.extend(self.b4.iter());
        out
    }

    pub fn assign(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for x in self.w1.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.b1.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.w2.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.b2.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.w3.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.b3.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.w4.iter_mut() {
            *x = it.next().unwrap();
        }
        for x in self.b4.iter_mut() {
            *x = it.next().unwrap();
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Forward {
        let a1 = (x.dot(&self.w1.t()) + &self.b1).mapv_into(f64::tanh);
        let a2 = (a1.dot(&self.w2.t()) + &self.b2).mapv_into(f64::tanh);
        let t3 = (a2.dot(&self.w3.t()) + &self.b3).mapv_into(f64::tanh);
        let a3 = &t3 + &a1;
        let out = a3.dot(&self.w4.t()) + &self.b4;
        Forward { a1, a2, t3, a3, out }
    }

    /// Reconstruction of each row of `x`.
    pub fn reconstruct(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).out
    }

    /// Mean squared reconstruction error per row.
    pub fn window_errors(&self, x: &Array2<f64>) -> Vec<f64> {
        let out = self.reconstruct(x);
        let w = x.ncols() as f64;
        (&out - x)
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|d| d * d).sum::<f64>() / w)
            .collect()
    }

    /// Mean squared error over all entries of `x`.
    pub fn loss(&self, x: &Array2<f64>) -> f64 {
        let out = self.reconstruct(x);
        (&out - x).mapv(|d| d * d).sum() / x.len() as f64
    }

    /// Loss and analytic gradient, flattened in [`Self::flatten`] order.
    pub fn loss_and_gradient(&self, x: &Array2<f64>) -> (f64, Vec<f64>) {
        let f = self.forward(x);
        let diff = &f.out - x;
        let scale = 1.0 / x.len() as f64;
        let loss = diff.mapv(|d| d * d).sum() * scale;

        let d_out = diff * (2.0 * scale);
        let g_w4 = d_out.t().dot(&f.a3);
        let g_b4 = d_out.sum_axis(Axis(0));
        let d_a3 = d_out.dot(&self.w4);

        let d_z3 = &d_a3 * &f.t3.mapv(|t| 1.0 - t * t);
        let g_w3 = d_z3.t().dot(&f.a2);
        let g_b3 = d_z3.sum_axis(Axis(0));

        let d_a2 = d_z3.dot(&self.w3);
        let d_z2 = d_a2 * &f.a2.mapv(|a| 1.0 - a * a);
        let g_w2 = d_z2.t().dot(&f.a1);
        let g_b2 = d_z2.sum_axis(Axis(0));

        // the skip path feeds the first activation straight into a3
        let d_a1 = d_z2.dot(&self.w2) + &d_a3;
        let d_z1 = d_a1 * &f.a1.mapv(|a| 1.0 - a * a);
        let g_w1 = d_z1.t().dot(x);
        let g_b1 = d_z1.sum_axis(Axis(0));

        let mut grad = Vec::with_capacity(self.num_params());
        grad.extend(g_w1.iter());
        grad.extend(g_b1.iter());
        grad.extend(g_w2.iter());
        grad.extend(g_b2.iter());
        grad.extend(g_w3.iter());
        grad.extend(g_b3.iter());
        grad.extend(g_w4.iter());
        grad.extend(g_b4.iter());
        (loss, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    /// Mean of per-window training errors.
    pub mean: f64,
    /// Population std of per-window training errors.
    pub std: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Windows used for the gradient steps.
    pub windows: usize,
}

/// Trained window autoencoder plus its anomaly cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionDetector {
    pub window_length: usize,
    pub config: DetectorConfig,
    /// Affine normalization applied to component values before windowing.
    pub input_mean: f64,
    pub input_scale: f64,
    pub params: AutoencoderParams,
    pub threshold: f64,
    pub training_stats: TrainingStats,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    detector: ReconstructionDetector,
}

/// Stacks windows `starts[k]..starts[k] + window` of `values` into rows.
fn window_matrix(values: &[f64], window: usize, starts: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((starts.len(), window), |(r, c)| values[starts[r] + c])
}

/// Evenly spaced window starts, at most `limit` of them.
fn training_starts(count: usize, limit: usize) -> Vec<usize> {
    if count <= limit {
        return (0..count).collect();
    }
    (0..limit)
        .map(|j| ((j as f64) * (count - 1) as f64 / (limit - 1) as f64).round() as usize)
        .collect()
}

impl ReconstructionDetector {
    fn normalize(&self, component: &[f64]) -> Vec<f64> {
        component
            .iter()
            .map(|v| (v - self.input_mean) / self.input_scale)
            .collect()
    }

    /// Per-window mean squared errors for every stride-1 window.
    pub fn score_windows(&self, component: &[f64]) -> Vec<f64> {
        let w = self.window_length;
        if component.len() < w {
            return Vec::new();
        }
        let values = self.normalize(component);
        let starts: Vec<usize> = (0..=values.len() - w).collect();
        // chunked to bound the activation matrices
        let mut errors = Vec::with_capacity(starts.len());
        for chunk in starts.chunks(4096) {
            errors.extend(self.params.window_errors(&window_matrix(&values, w, chunk)));
        }
        errors
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            detector: self.clone(),
        };
        let text = serde_json::to_string_pretty(&ck)?;
        fs::write(path, text).map_err(|e| KpiError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| KpiError::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(KpiError::InvalidData(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        Ok(ck.detector)
    }
}

/// Full-batch Adam on the window reconstruction loss.
pub fn train_reconstruction_detector(component: &[f64], cfg: &DetectorConfig) -> Result<ReconstructionDetector> {
    cfg.validate()?;
    let w = cfg.window_length;
    if component.len() < 2 * w {
        return Err(KpiError::InsufficientData {
            needed: 2 * w,
            actual: component.len(),
        });
    }
    let (mean, std) = mean_std(component);
    let scale = if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 };
    let values: Vec<f64> = component.iter().map(|v| (v - mean) / scale).collect();

    let count = values.len() - w + 1;
    let starts = training_starts(count, cfg.max_train_windows);
    let x = window_matrix(&values, w, &starts);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = AutoencoderParams::init(w, &mut rng);
    let mut theta = params.flatten();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);

    let initial_loss = params.loss(&x);
    for epoch in 1..=cfg.epochs {
        let (_, grad) = params.loss_and_gradient(&x);
        let bc1 = 1.0 - beta1.powi(epoch as i32);
        let bc2 = 1.0 - beta2.powi(epoch as i32);
        for k in 0..theta.len() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
            theta[k] -= cfg.learning_rate * (m[k] / bc1) / ((v[k] / bc2).sqrt() + eps);
        }
        params.assign(&theta);
    }
    let final_loss = params.loss(&x);

    let mut det = ReconstructionDetector {
        window_length: w,
        config: cfg.clone(),
        input_mean: mean,
        input_scale: scale,
        params,
        threshold: 0.0,
        training_stats: TrainingStats {
            mean: 0.0,
            std: 0.0,
            initial_loss,
            final_loss,
            windows: starts.len(),
        },
    };
    // statistics over every stride-1 window, not only the fitted subset,
    // which the model has partly memorized
    let errors = det.score_windows(component);
    let (err_mean, err_std) = mean_std(&errors);
    det.threshold = err_mean + 3.0 * err_std;
    det.training_stats.mean = err_mean;
    det.training_stats.std = err_std;
    Ok(det)
}

/// Sample indices covered by at least one window whose error exceeds the
/// detector threshold.
/// Per-sample severity: the largest `sqrt(error / threshold)` over the
/// windows containing the sample whose error exceeds the threshold, and 0
/// where no such window exists.
pub fn component_anomaly_scores(component: &[f64], detector: &ReconstructionDetector) -> Vec<f64> {
    let w = detector.window_length;
    let errors = detector.score_windows(component);
    let mut scores = vec![0.0f64; component.len()];
    for (start, &e) in errors.iter().enumerate() {
        if e > detector.threshold {
            let s = (e / detector.threshold.max(f64::MIN_POSITIVE)).sqrt();
            for v in &mut scores[start..start + w] {
                *v = v.max(s);
            }
        }
    }
    scores
}

/// Samples covered by at least one window whose error exceeds the
/// threshold.
pub fn detect_component_anomalies(component: &[f64], detector: &ReconstructionDetector) -> Vec<usize> {
    component_anomaly_scores(component, detector)
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(i, _)| i)
        .collect()
}
