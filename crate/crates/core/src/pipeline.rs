//! End-to-end localization: detect anomaly segments on the alarm, then
//! score every candidate by symbol similarity and Granger causality.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causality::{max_granger_f, DEFAULT_F_MAX};
use crate::decomposition::StlConfig;
use crate::detection::{detect_alarm, AlarmDetection, AnomalySegment, DetectionMode, DetectorConfig};
use crate::error::{KpiError, Result};
use crate::scoring::{rank_candidates, score_candidates, select_root_causes, CausalityScaling, CorrelationScore, SelectionPolicy};
use crate::series::{default_w, paa, trend_signs, znormalize_values, KpiSeries, PaaVector, TrendSigns};
use crate::symbolic::{gaussian_breakpoints, isax_symbolize, jaccard_similarity, sax_symbolize, Breakpoints, Encoding, IsaxSequence};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// PAA size; `None` means `round(sqrt(n))`.
    pub w: Option<usize>,
    pub alpha: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub lag_l: usize,
    pub q: usize,
    pub period: usize,
    pub seasonal_window: usize,
    /// `None` uses the STL heuristic for the period.
    pub trend_window: Option<usize>,
    pub selection: SelectionPolicy,
    pub seed: u64,
    pub jobs: usize,
    pub encoding: Encoding,
    pub detection: DetectionMode,
    pub causality_scaling: CausalityScaling,
    pub sigma_k: f64,
    /// Autoencoder window; `None` ties it to the period.
    pub window_length: Option<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub max_gap: usize,
    /// See [`DetectorConfig::severity_ratio`].
    pub severity_ratio: f64,
    pub f_max: f64,
}

impl RunConfig {
    pub fn new(period: usize) -> Self {
        let det = DetectorConfig::default();
        Self {
            w: None,
            alpha: 9,
            lambda: 0.9,
            gamma: det.gamma,
            lag_l: det.lag_l,
            q: 3,
            period,
            seasonal_window: 7,
            trend_window: None,
            selection: SelectionPolicy::default(),
            seed: 0,
            jobs: 1,
            encoding: Encoding::Isax,
            detection: DetectionMode::Decomposition,
            causality_scaling: CausalityScaling::MinMax,
            sigma_k: det.sigma_k,
            window_length: None,
            epochs: det.epochs,
            learning_rate: det.learning_rate,
            max_gap: det.max_gap,
            severity_ratio: det.severity_ratio,
            f_max: DEFAULT_F_MAX,
        }
    }

    pub fn resolved_w(&self, n: usize) -> usize {
        self.w.unwrap_or_else(|| default_w(n))
    }

    /// Shortest segment handed to the F test: `3q + 2` points leave one
    /// residual degree of freedom.
    pub fn min_segment_len(&self) -> usize {
        3 * self.q + 2
    }

    pub fn stl_config(&self) -> StlConfig {
        let mut stl = StlConfig::new(self.period);
        stl.seasonal_window = self.seasonal_window;
        stl.trend_window = self
            .trend_window
            .unwrap_or_else(|| StlConfig::default_trend_window(self.period, self.seasonal_window));
        stl
    }

    pub fn detector_config(&self) -> DetectorConfig {
        let base = DetectorConfig::for_period(self.period);
        DetectorConfig {
            gamma: self.gamma,
            lag_l: self.lag_l,
            sigma_k: self.sigma_k,
            window_length: self.window_length.unwrap_or(base.window_length),
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.seed,
            max_gap: self.max_gap,
            severity_ratio: self.severity_ratio,
            ..base
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let w = self.resolved_w(n);
        if w == 0 || w > n {
            return Err(KpiError::param(format!("PAA size {w} outside [1, {n}]")));
        }
        if self.alpha < 2 {
            return Err(KpiError::param("alpha must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(KpiError::param(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.q == 0 {
            return Err(KpiError::param("lag order q must be at least 1"));
        }
        if self.jobs == 0 {
            return Err(KpiError::param("jobs must be at least 1"));
        }
        if self.min_segment_len() > w {
            return Err(KpiError::param(format!(
                "PAA size {w} cannot hold a {}-point segment",
                self.min_segment_len()
            )));
        }
        if self.detection == DetectionMode::TrendOnly && 2 * self.lag_l > w {
            return Err(KpiError::param("trend lag too large for the PAA size"));
        }
        self.selection.validate()?;
        self.detector_config().validate()?;
        if self.detection == DetectionMode::Decomposition {
            self.stl_config().validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub detection: f64,
    pub paa: f64,
    pub symbolic: f64,
    pub similarity: f64,
    pub causality: f64,
    pub scoring: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub mode: DetectionMode,
    pub trend_flags: usize,
    pub seasonal_flags: usize,
    pub residual_flags: usize,
    pub paa_indices: Vec<usize>,
    pub focus_indices: Vec<usize>,
    pub segments: Vec<AnomalySegment>,
    pub background: Vec<AnomalySegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub schema_version: u32,
    pub incident_id: String,
    pub config: RunConfig,
    pub n: usize,
    pub m: usize,
    pub w: usize,
    pub anomaly_detected: bool,
    pub detection: DetectionSummary,
    pub scores: Vec<CorrelationScore>,
    pub predicted: Vec<String>,
    /// Candidates whose segments were all too short for the F test.
    pub causality_skipped: Vec<String>,
    pub timings: StageTimings,
}

impl LocalizationReport {
    pub fn ranked_ids(&self) -> Vec<String> {
        self.scores.iter().map(|s| s.kpi_id.clone()).collect()
    }

    /// Copy with wall-clock timings and the worker count cleared, for
    /// comparing runs.
    pub fn without_run_metadata(&self) -> Self {
        let mut r = self.clone();
        r.timings = StageTimings::default();
        r.config.jobs = 0;
        r
    }
}

fn check_inputs(alarm: &KpiSeries, candidates: &[KpiSeries]) -> Result<()> {
    if candidates.is_empty() {
        return Err(KpiError::InvalidData("no candidate series".into()));
    }
    for c in candidates {
        if c.len() != alarm.len() {
            return Err(KpiError::InvalidData(format!(
                "candidate {} has {} samples, alarm has {}",
                c.id(),
                c.len(),
                alarm.len()
            )));
        }
    }
    Ok(())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| KpiError::param(format!("cannot start {jobs} workers: {e}")))
}

/// Runs only the detection stage; returns the result and its duration.
pub fn run_detection(alarm: &KpiSeries, cfg: &RunConfig) -> Result<(AlarmDetection, f64)> {
    cfg.validate(alarm.len())?;
    let start = Instant::now();
    let w = cfg.resolved_w(alarm.len());
    let (det, _) = pool(cfg.jobs)?.install(|| {
        detect_alarm(
            alarm.values(),
            w,
            &cfg.stl_config(),
            &cfg.detector_config(),
            cfg.detection,
            cfg.min_segment_len(),
        )
    })?;
    Ok((det, start.elapsed().as_secs_f64()))
}

pub fn localize(incident_id: &str, alarm: &KpiSeries, candidates: &[KpiSeries], cfg: &RunConfig) -> Result<LocalizationReport> {
    check_inputs(alarm, candidates)?;
    let (det, secs) = run_detection(alarm, cfg)?;
    localize_with_detection(incident_id, alarm, candidates, cfg, &det, secs)
}

struct Encoded {
    paa: PaaVector,
    signs: TrendSigns,
}

fn encode_paa(values: &[f64], w: usize) -> Result<Encoded> {
    let z = znormalize_values(values);
    let p = paa(&z.values, w)?;
    let signs = trend_signs(values, &p);
    Ok(Encoded { paa: p, signs })
}

fn symbols(e: &Encoded, bp: &Breakpoints, encoding: Encoding, idx: &[usize]) -> Result<IsaxSequence> {
    let full = match encoding {
        Encoding::Sax => sax_symbolize(&e.paa, bp),
        Encoding::Isax => isax_symbolize(&e.paa, &e.signs, bp)?,
    };
    Ok(full.select(idx))
}

/// Scores candidates against an already computed detection (which must
/// come from the same alarm and PAA size).
pub fn localize_with_detection(
    incident_id: &str,
    alarm: &KpiSeries,
    candidates: &[KpiSeries],
    cfg: &RunConfig,
    det: &AlarmDetection,
    detection_secs: f64,
) -> Result<LocalizationReport> {
    check_inputs(alarm, candidates)?;
    let n = alarm.len();
    cfg.validate(n)?;
    let w = cfg.resolved_w(n);
    let total_start = Instant::now();
    let mut timings = StageTimings {
        detection: detection_secs,
        ..StageTimings::default()
    };
    let summary = DetectionSummary {
        mode: det.mode,
        trend_flags: det.trend_indices.len(),
        seasonal_flags: det.seasonal_indices.len(),
        residual_flags: det.residual_indices.len(),
        paa_indices: det.paa_indices.clone(),
        focus_indices: det.focus_indices.clone(),
        segments: det.segments.clone(),
        background: det.background.clone(),
    };
    let mut report = LocalizationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        incident_id: incident_id.to_string(),
        config: cfg.clone(),
        n,
        m: candidates.len(),
        w,
        anomaly_detected: !det.segments.is_empty(),
        detection: summary,
        scores: Vec::new(),
        predicted: Vec::new(),
        causality_skipped: Vec::new(),
        timings: StageTimings::default(),
    };
    if det.segments.is_empty() {
        log::info!("{incident_id}: no anomaly segment on the alarm");
        timings.total = detection_secs + total_start.elapsed().as_secs_f64();
        report.timings = timings;
        return Ok(report);
    }
    let idx = &det.focus_indices;
    let bp = gaussian_breakpoints(cfg.alpha)?;

    let workers = pool(cfg.jobs)?;
    let scored = workers.install(|| -> Result<_> {
        let t = Instant::now();
        let alarm_enc = encode_paa(alarm.values(), w)?;
        let encoded: Vec<Encoded> = candidates
            .par_iter()
            .map(|c| encode_paa(c.values(), w))
            .collect::<Result<_>>()?;
        timings.paa = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let alarm_sym = symbols(&alarm_enc, &bp, cfg.encoding, idx)?;
        let cand_sym: Vec<IsaxSequence> = encoded
            .par_iter()
            .map(|e| symbols(e, &bp, cfg.encoding, idx))
            .collect::<Result<_>>()?;
        timings.symbolic = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let similarity: Vec<f64> = cand_sym
            .par_iter()
            .map(|s| jaccard_similarity(&alarm_sym, s))
            .collect::<Result<_>>()?;
        timings.similarity = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let causality: Vec<Option<f64>> = encoded
            .par_iter()
            .map(|e| max_granger_f(&alarm_enc.paa.values, &e.paa.values, &det.segments, cfg.q, cfg.f_max))
            .collect();
        timings.causality = t.elapsed().as_secs_f64();
        Ok((similarity, causality))
    })?;
    let (similarity, causality) = scored;

    let t = Instant::now();
    let ids: Vec<String> = candidates.iter().map(|c| c.id().to_string()).collect();
    for (id, f) in ids.iter().zip(&causality) {
        if f.is_none() {
            log::warn!("{incident_id}: no segment long enough for the F test on {id}; causality set to 0");
            report.causality_skipped.push(id.clone());
        }
    }
    let raw: Vec<f64> = causality.iter().map(|f| f.unwrap_or(0.0)).collect();
    let ranked = rank_candidates(score_candidates(&ids, &similarity, &raw, cfg.lambda, cfg.causality_scaling)?);
    report.predicted = select_root_causes(&ranked, &cfg.selection)?;
    report.scores = ranked;
    timings.scoring = t.elapsed().as_secs_f64();
    timings.total = detection_secs + total_start.elapsed().as_secs_f64();
    report.timings = timings;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_scenario, ScenarioSpec};

    fn cfg() -> RunConfig {
        RunConfig {
            epochs: 150,
            ..RunConfig::new(48)
        }
    }

    fn small(seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            m: 15,
            n: 1440,
            period: 48,
            num_root_causes: 3,
            seed,
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = RunConfig::new(96);
        assert_eq!(c.resolved_w(2880), 54);
        assert_eq!(c.min_segment_len(), 11);
        c.validate(2880).unwrap();
        assert!(RunConfig { lambda: 1.5, ..c.clone() }.validate(2880).is_err());
        assert!(RunConfig { w: Some(5), ..c.clone() }.validate(2880).is_err());
        assert!(RunConfig { jobs: 0, ..c }.validate(2880).is_err());
    }

    #[test]
    fn localizes_a_small_scenario() {
        let d = generate_scenario(&small(3)).unwrap();
        let r = localize(&d.incident_id, &d.alarm, &d.candidates, &cfg()).unwrap();
        assert!(r.anomaly_detected);
        assert_eq!(r.scores.len(), 15);
        let top: Vec<String> = r.ranked_ids().into_iter().take(10).collect();
        let found = d.truth.root_causes.iter().filter(|t| top.contains(t)).count();
        assert!(found >= 2, "top {top:?} truth {:?}", d.truth.root_causes);
        for (i, s) in r.scores.iter().enumerate() {
            assert_eq!(s.rank, i + 1);
            assert!((0.0..=1.0).contains(&s.combined));
        }
    }

    #[test]
    fn constant_alarm_reports_nothing() {
        let d = generate_scenario(&small(4)).unwrap();
        let flat = KpiSeries::from_values("alarm", vec![5.0; 1440]).unwrap();
        let r = localize("flat", &flat, &d.candidates, &cfg()).unwrap();
        assert!(!r.anomaly_detected);
        assert!(r.detection.segments.is_empty() && r.scores.is_empty());
    }

    #[test]
    fn jobs_do_not_change_results() {
        let d = generate_scenario(&small(5)).unwrap();
        let one = localize(&d.incident_id, &d.alarm, &d.candidates, &cfg()).unwrap();
        let three = localize(&d.incident_id, &d.alarm, &d.candidates, &RunConfig { jobs: 3, ..cfg() }).unwrap();
        assert_eq!(
            serde_json::to_string(&one.without_run_metadata()).unwrap(),
            serde_json::to_string(&three.without_run_metadata()).unwrap()
        );
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let d = generate_scenario(&small(6)).unwrap();
        let short = KpiSeries::from_values("vm-x", vec![1.0; 100]).unwrap();
        assert!(localize("x", &d.alarm, &[short], &cfg()).is_err());
        assert!(localize("x", &d.alarm, &[], &cfg()).is_err());
    }
}
