//! Seeded synthetic incidents: seasonal candidate KPIs, injected anomalies
//! on a subset of root causes, and an alarm aggregating all candidates with
//! the root-cause changes arriving `lag_delta` samples later.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{KpiError, Result};
use crate::evaluation::RcaGroundTruth;
use crate::series::{default_w, mean_std, KpiSeries};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
pub const ALARM_ID: &str = "alarm";

const START_TIME: i64 = 1_700_000_000;
const INTERVAL: u64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    TrendShift,
    SeasonalDeviation,
    ResidualSpike,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 3] = [
        AnomalyKind::TrendShift,
        AnomalyKind::SeasonalDeviation,
        AnomalyKind::ResidualSpike,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindWeights {
    pub trend_shift: f64,
    pub seasonal_deviation: f64,
    pub residual_spike: f64,
}

impl Default for KindWeights {
    fn default() -> Self {
        Self {
            trend_shift: 1.0,
            seasonal_deviation: 1.0,
            residual_spike: 1.0,
        }
    }
}

impl KindWeights {
    pub fn only(kind: AnomalyKind) -> Self {
        let mut w = Self {
            trend_shift: 0.0,
            seasonal_deviation: 0.0,
            residual_spike: 0.0,
        };
        match kind {
            AnomalyKind::TrendShift => w.trend_shift = 1.0,
            AnomalyKind::SeasonalDeviation => w.seasonal_deviation = 1.0,
            AnomalyKind::ResidualSpike => w.residual_spike = 1.0,
        }
        w
    }

    fn as_array(&self) -> [f64; 3] {
        [self.trend_shift, self.seasonal_deviation, self.residual_spike]
    }

    fn sample(&self, rng: &mut impl Rng) -> AnomalyKind {
        let w = self.as_array();
        let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
        for (kind, weight) in AnomalyKind::ALL.iter().zip(w) {
            if u < weight {
                return *kind;
            }
            u -= weight;
        }
        AnomalyKind::ALL[w.iter().rposition(|&x| x > 0.0).unwrap_or(0)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub m: usize,
    pub n: usize,
    pub period: usize,
    pub num_root_causes: usize,
    pub lag_delta: usize,
    /// Noise standard deviation relative to each candidate's seasonal
    /// amplitude.
    pub noise_sigma: f64,
    pub kind_weights: KindWeights,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            m: 50,
            n: 2880,
            period: 96,
            num_root_causes: 5,
            lag_delta: 5,
            noise_sigma: 0.3,
            kind_weights: KindWeights::default(),
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    /// Default scenario whose root-cause count is drawn uniformly from
    /// `3..=8` using the seed.
    pub fn benchmark(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
        Self {
            num_root_causes: rng.random_range(3..=8),
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(KpiError::param("need at least two candidates"));
        }
        if self.num_root_causes == 0 || self.num_root_causes >= self.m {
            return Err(KpiError::param(format!(
                "num_root_causes {} must lie in [1, m = {})",
                self.num_root_causes, self.m
            )));
        }
        if self.period < 2 {
            return Err(KpiError::param("period must be at least 2"));
        }
        if self.n < 8 * self.period.max(50) {
            return Err(KpiError::param(format!(
                "series length {} too short for period {}",
                self.n, self.period
            )));
        }
        if 10 * self.lag_delta >= self.n {
            return Err(KpiError::param(format!("lag_delta {} must be below n/10", self.lag_delta)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(KpiError::param("noise_sigma must be non-negative"));
        }
        let w = self.kind_weights.as_array();
        if w.iter().any(|&x| !(x >= 0.0)) || !(w.iter().sum::<f64>() > 0.0) {
            return Err(KpiError::param("anomaly kind weights must be non-negative with a positive sum"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionLabel {
    pub series_id: String,
    pub kind: AnomalyKind,
    /// Half-open sample window.
    pub start: usize,
    pub end: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub incident_id: String,
    pub spec: ScenarioSpec,
    pub alarm: KpiSeries,
    pub candidates: Vec<KpiSeries>,
    pub truth: RcaGroundTruth,
    /// Root-cause windows followed by the alarm window.
    pub labels: Vec<InjectionLabel>,
    /// Aggregation weight of each candidate in the alarm.
    pub weights: Vec<f64>,
}

impl LabeledDataset {
    pub fn alarm_labels(&self) -> impl Iterator<Item = &InjectionLabel> {
        self.labels.iter().filter(|l| l.series_id == self.alarm.id())
    }

    pub fn candidate_ids(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.id().to_string()).collect()
    }
}

/// Unit-magnitude anomaly profile of `duration` samples.
///
/// * trend shift: a raised plateau with linear ramps a quarter of the
///   duration long on either side;
/// * seasonal deviation: an added oscillation with a cycle of
///   [`deviation_cycle`] samples;
/// * residual spike: sharp rise over the first fifth, then geometric decay.
pub fn anomaly_profile(kind: AnomalyKind, duration: usize, period: usize) -> Vec<f64> {
    match kind {
        AnomalyKind::TrendShift => {
            let ramp = (duration / 4).max(1);
            (0..duration)
                .map(|u| {
                    let up = (u + 1) as f64 / ramp as f64;
                    let down = (duration - u) as f64 / ramp as f64;
                    up.min(down).min(1.0)
                })
                .collect()
        }
        AnomalyKind::SeasonalDeviation => {
            let cycle = deviation_cycle(period) as f64;
            (0..duration).map(|u| (2.0 * PI * u as f64 / cycle).sin()).collect()
        }
        AnomalyKind::ResidualSpike => {
            let rise = (duration / 5).max(1);
            let tail = (duration - rise).max(1) as f64;
            (0..duration)
                .map(|u| {
                    if u < rise {
                        (u + 1) as f64 / rise as f64
                    } else {
                        0.05f64.powf((u - rise + 1) as f64 / tail)
                    }
                })
                .collect()
        }
    }
}

/// Cycle of the seasonal-deviation oscillation: two periods.
pub fn deviation_cycle(period: usize) -> usize {
    2 * period
}

/// Adds `magnitude * profile` over `[t0, t0 + duration)` and returns that
/// window.
pub fn inject_anomaly(
    values: &mut [f64],
    kind: AnomalyKind,
    t0: usize,
    magnitude: f64,
    duration: usize,
    period: usize,
) -> Result<(usize, usize)> {
    if duration == 0 || t0 + duration > values.len() {
        return Err(KpiError::param(format!(
            "anomaly window [{t0}, {}) does not fit in {} samples",
            t0 + duration,
            values.len()
        )));
    }
    for (v, p) in values[t0..t0 + duration].iter_mut().zip(anomaly_profile(kind, duration, period)) {
        *v += magnitude * p;
    }
    Ok((t0, t0 + duration))
}

/// Duration range (samples) and the alarm-level effect range (in alarm
/// standard deviations) per kind. Durations are tied to the PAA segment
/// length `seg` so every anomaly survives the aggregation.
fn kind_ranges(kind: AnomalyKind, seg: usize, period: usize) -> ((usize, usize), (f64, f64)) {
    let cycle = deviation_cycle(period);
    match kind {
        AnomalyKind::TrendShift => ((6 * seg, 12 * seg), (3.0, 5.0)),
        AnomalyKind::SeasonalDeviation => ((2 * cycle, 3 * cycle), (2.5, 4.0)),
        AnomalyKind::ResidualSpike => ((2 * seg, 4 * seg), (6.0, 9.0)),
    }
}

struct Candidate {
    level: f64,
    amplitude: f64,
    phase: f64,
    harmonic_phase: f64,
}

impl Candidate {
    fn seasonal(&self, t: usize, period: usize) -> f64 {
        let theta = 2.0 * PI * t as f64 / period as f64 + self.phase;
        self.amplitude * (theta.sin() + 0.3 * (2.0 * theta + self.harmonic_phase).sin())
    }
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, m, period) = (spec.n, spec.m, spec.period);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    // the machines share one daily cycle, each slightly offset
    let cluster_phase = rng.random_range(0.0..2.0 * PI);
    let cluster_harmonic = rng.random_range(0.0..2.0 * PI);
    let shapes: Vec<Candidate> = (0..m)
        .map(|_| Candidate {
            level: rng.random_range(10.0..50.0),
            amplitude: rng.random_range(0.5..2.0),
            phase: cluster_phase + rng.random_range(-0.5..0.5),
            harmonic_phase: cluster_harmonic + rng.random_range(-0.5..0.5),
        })
        .collect();
    // log-uniform in [0.5, 2]
    let weights: Vec<f64> = (0..m).map(|_| 2f64.powf(rng.random_range(-1.0..1.0))).collect();

    let mut roots: Vec<usize> = rand::seq::index::sample(&mut rng, m, spec.num_root_causes).into_vec();
    roots.sort_unstable();
    let kind = spec.kind_weights.sample(&mut rng);
    let seg = n / default_w(n);
    let ((dmin, dmax), (mmin, mmax)) = kind_ranges(kind, seg, period);
    let duration = rng.random_range(dmin..=dmax).min(n / 4);
    let sign = 1.0;
    let max_jitter = 3;
    let lo = n / 4;
    let hi = (3 * n / 4).saturating_sub(duration + max_jitter + spec.lag_delta).max(lo + 1);
    let t0 = rng.random_range(lo..hi);

    let unit_noise = |rng: &mut ChaCha8Rng, sd: f64, v: &mut [f64]| {
        for x in v.iter_mut() {
            *x += sd * unit.sample(rng);
        }
    };
    // anomaly-free candidates; the alarm aggregates these
    let mut base: Vec<Vec<f64>> = Vec::with_capacity(m);
    for c in &shapes {
        let mut v: Vec<f64> = (0..n).map(|t| c.level + c.seasonal(t, period)).collect();
        unit_noise(&mut rng, spec.noise_sigma * c.amplitude, &mut v);
        base.push(v);
    }

    let id_of = |i: usize| format!("vm-{i:03}");
    let total_weight: f64 = weights.iter().sum();
    let clean_alarm: Vec<f64> = (0..n)
        .map(|t| base.iter().zip(&weights).map(|(b, w)| w * b[t]).sum::<f64>() / total_weight)
        .collect();
    let (_, alarm_sd) = mean_std(&clean_alarm);
    // alarm-level effect, split unevenly across the root causes
    let effect = sign * alarm_sd * rng.random_range(mmin..mmax);
    let shares: Vec<f64> = roots.iter().map(|_| rng.random_range(0.5..1.5)).collect();
    let share_sum: f64 = shares.iter().sum();

    let mut candidates = base;
    let mut labels = Vec::new();
    let mut alarm_anomaly = vec![0.0; n];
    let mut alarm_window = (usize::MAX, 0);
    for (&r, share) in roots.iter().zip(&shares) {
        let onset = t0 + rng.random_range(0..=max_jitter);
        let alarm_part = effect * share / share_sum;
        let magnitude = alarm_part * total_weight / weights[r];
        let (s, e) = inject_anomaly(&mut candidates[r], kind, onset, magnitude, duration, period)?;
        labels.push(InjectionLabel {
            series_id: id_of(r),
            kind,
            start: s,
            end: e,
            magnitude,
        });
        // the alarm sees the same change lag_delta samples later
        let shifted = onset + spec.lag_delta;
        inject_anomaly(&mut alarm_anomaly, kind, shifted, alarm_part, duration, period)?;
        alarm_window = (alarm_window.0.min(shifted), alarm_window.1.max(shifted + duration));
    }

    let mean_amp = shapes.iter().map(|c| c.amplitude).sum::<f64>() / m as f64;
    let mut alarm: Vec<f64> = clean_alarm.iter().zip(&alarm_anomaly).map(|(a, b)| a + b).collect();
    unit_noise(&mut rng, spec.noise_sigma * mean_amp / (m as f64).sqrt(), &mut alarm);
    labels.push(InjectionLabel {
        series_id: ALARM_ID.to_string(),
        kind,
        start: alarm_window.0,
        end: alarm_window.1,
        magnitude: 0.0,
    });

    let series = |id: String, v: Vec<f64>| KpiSeries::new(id, START_TIME, INTERVAL, v);
    Ok(LabeledDataset {
        incident_id: format!("incident-{:06}", spec.seed),
        spec: spec.clone(),
        alarm: series(ALARM_ID.to_string(), alarm)?,
        candidates: candidates
            .into_iter()
            .enumerate()
            .map(|(i, v)| series(id_of(i), v))
            .collect::<Result<_>>()?,
        truth: RcaGroundTruth {
            incident_id: format!("incident-{:06}", spec.seed),
            root_causes: roots.iter().map(|&r| id_of(r)).collect(),
        },
        labels,
        weights,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub incident_id: String,
    pub spec: ScenarioSpec,
    pub truth: RcaGroundTruth,
    pub labels: Vec<InjectionLabel>,
    pub weights: Vec<f64>,
    pub alarm_file: String,
    pub candidate_files: Vec<String>,
}

impl LabeledDataset {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: MANIFEST_VERSION,
            incident_id: self.incident_id.clone(),
            spec: self.spec.clone(),
            truth: self.truth.clone(),
            labels: self.labels.clone(),
            weights: self.weights.clone(),
            alarm_file: format!("{}.csv", self.alarm.id()),
            candidate_files: self.candidates.iter().map(|c| format!("{}.csv", c.id())).collect(),
        }
    }

    /// Writes `manifest.json` plus one CSV per series into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| KpiError::io(dir, e))?;
        let manifest = self.manifest();
        self.alarm.write_csv(dir.join(&manifest.alarm_file))?;
        for (c, file) in self.candidates.iter().zip(&manifest.candidate_files) {
            c.write_csv(dir.join(file))?;
        }
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text + "\n").map_err(|e| KpiError::io(&path, e))
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| KpiError::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(KpiError::InvalidData(format!(
                "unsupported manifest version {}",
                manifest.format_version
            )));
        }
        let stem = |f: &str| f.strip_suffix(".csv").unwrap_or(f).to_string();
        let alarm = KpiSeries::read_csv(dir.join(&manifest.alarm_file), stem(&manifest.alarm_file))?;
        let candidates = manifest
            .candidate_files
            .iter()
            .map(|f| KpiSeries::read_csv(dir.join(f), stem(f)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            incident_id: manifest.incident_id,
            spec: manifest.spec,
            alarm,
            candidates,
            truth: manifest.truth,
            labels: manifest.labels,
            weights: manifest.weights,
        })
    }
}
