//! Python bindings: scenario generation, end-to-end localization, metrics
//! and the numeric building blocks.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use kpiroot::causality::granger_f as core_granger_f;
use kpiroot::datagen::{generate_scenario as core_generate, LabeledDataset, ScenarioSpec};
use kpiroot::decomposition::{stl_decompose_values, StlConfig};
use kpiroot::detection::{AnomalySegment, DetectionMode, SegmentKind};
use kpiroot::evaluation::evaluate_incident;
use kpiroot::scoring::{SelectionMode, SelectionPolicy};
use kpiroot::series::{paa as core_paa, trend_signs, znormalize_values};
use kpiroot::symbolic::{gaussian_breakpoints, isax_symbolize, jaccard_similarity, sax_symbolize, Encoding, IsaxSequence};
use kpiroot::{KpiError, KpiSeries, LocalizationReport};

fn to_py(e: KpiError) -> PyErr {
    match e {
        KpiError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_encoding(name: &str) -> PyResult<Encoding> {
    match name {
        "isax" => Ok(Encoding::Isax),
        "sax" => Ok(Encoding::Sax),
        other => Err(PyValueError::new_err(format!("unknown encoding `{other}` (isax or sax)"))),
    }
}

/// Pipeline parameters. Keyword arguments override the defaults.
#[pyclass(name = "RunConfig", module = "kpiroot_py")]
struct PyRunConfig {
    inner: kpiroot::RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (period, *, w=None, alpha=9, lambda_=0.9, gamma=2.0, trend_lags=5, lag=3, theta=0.8, top_k=None, encoding="isax", detection="decomposition", seed=0, jobs=1))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        period: usize,
        w: Option<usize>,
        alpha: usize,
        lambda_: f64,
        gamma: f64,
        trend_lags: usize,
        lag: usize,
        theta: f64,
        top_k: Option<usize>,
        encoding: &str,
        detection: &str,
        seed: u64,
        jobs: usize,
    ) -> PyResult<Self> {
        let mut cfg = kpiroot::RunConfig::new(period);
        cfg.w = w;
        cfg.alpha = alpha;
        cfg.lambda = lambda_;
        cfg.gamma = gamma;
        cfg.lag_l = trend_lags;
        cfg.q = lag;
        cfg.selection = match top_k {
            Some(k) => SelectionPolicy::top_k(k),
            None => SelectionPolicy::relative_threshold(theta),
        };
        cfg.encoding = parse_encoding(encoding)?;
        cfg.detection = match detection {
            "decomposition" => DetectionMode::Decomposition,
            "trend_only" => DetectionMode::TrendOnly,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown detection `{other}` (decomposition or trend_only)"
                )))
            }
        };
        cfg.seed = seed;
        cfg.jobs = jobs;
        Ok(Self { inner: cfg })
    }

    #[getter]
    fn period(&self) -> usize {
        self.inner.period
    }

    #[getter]
    fn alpha(&self) -> usize {
        self.inner.alpha
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn w(&self) -> Option<usize> {
        self.inner.w
    }

    #[getter]
    fn selection(&self) -> String {
        match self.inner.selection.mode {
            SelectionMode::TopK => format!("top_k({})", self.inner.selection.k),
            SelectionMode::RelativeThreshold => format!("threshold({})", self.inner.selection.theta),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(period={}, alpha={}, lambda_={}, selection={})",
            self.inner.period,
            self.inner.alpha,
            self.inner.lambda,
            self.selection()
        )
    }
}

/// One generated incident.
#[pyclass(name = "Scenario", module = "kpiroot_py", frozen)]
struct PyScenario {
    inner: LabeledDataset,
}

#[pymethods]
impl PyScenario {
    #[getter]
    fn incident_id(&self) -> String {
        self.inner.incident_id.clone()
    }

    #[getter]
    fn period(&self) -> usize {
        self.inner.spec.period
    }

    #[getter]
    fn alarm(&self) -> Vec<f64> {
        self.inner.alarm.values().to_vec()
    }

    /// Candidate id to values, in generation order.
    #[getter]
    fn candidates(&self) -> BTreeMap<String, Vec<f64>> {
        self.inner
            .candidates
            .iter()
            .map(|c| (c.id().to_string(), c.values().to_vec()))
            .collect()
    }

    #[getter]
    fn root_causes(&self) -> Vec<String> {
        self.inner.truth.root_causes.clone()
    }

    /// `(series_id, kind, start, end)` for every injected window.
    #[getter]
    fn labels(&self) -> Vec<(String, String, usize, usize)> {
        self.inner
            .labels
            .iter()
            .map(|l| (l.series_id.clone(), format!("{:?}", l.kind), l.start, l.end))
            .collect()
    }

    fn write_dir(&self, path: &str) -> PyResult<()> {
        self.inner.write_dir(path).map_err(to_py)
    }
}

/// Ranked localization result.
#[pyclass(name = "Report", module = "kpiroot_py", frozen)]
struct PyReport {
    inner: LocalizationReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn anomaly_detected(&self) -> bool {
        self.inner.anomaly_detected
    }

    #[getter]
    fn ranked_ids(&self) -> Vec<String> {
        self.inner.ranked_ids()
    }

    #[getter]
    fn predicted(&self) -> Vec<String> {
        self.inner.predicted.clone()
    }

    /// `(kpi_id, similarity, causality_raw, causality_scaled, combined)` in
    /// rank order.
    #[getter]
    fn scores(&self) -> Vec<(String, f64, f64, f64, f64)> {
        self.inner
            .scores
            .iter()
            .map(|s| (s.kpi_id.clone(), s.similarity, s.causality_raw, s.causality_scaled, s.combined))
            .collect()
    }

    /// Detected segments as half-open PAA ranges.
    #[getter]
    fn segments(&self) -> Vec<(usize, usize)> {
        self.inner.detection.segments.iter().map(|s| (s.t_s, s.t_e)).collect()
    }

    #[getter]
    fn w(&self) -> usize {
        self.inner.w
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(incident_id={:?}, candidates={}, segments={}, predicted={})",
            self.inner.incident_id,
            self.inner.m,
            self.inner.detection.segments.len(),
            self.inner.predicted.len()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (seed, *, m=50, n=2880, period=96, roots=None, lag_delta=5, noise=0.3))]
fn generate_scenario(
    seed: u64,
    m: usize,
    n: usize,
    period: usize,
    roots: Option<usize>,
    lag_delta: usize,
    noise: f64,
) -> PyResult<PyScenario> {
    let base = ScenarioSpec::benchmark(seed);
    let spec = ScenarioSpec {
        m,
        n,
        period,
        num_root_causes: roots.unwrap_or(base.num_root_causes),
        lag_delta,
        noise_sigma: noise,
        ..base
    };
    Ok(PyScenario {
        inner: core_generate(&spec).map_err(to_py)?,
    })
}

#[pyfunction]
fn load_scenario(path: &str) -> PyResult<PyScenario> {
    Ok(PyScenario {
        inner: LabeledDataset::read_dir(path).map_err(to_py)?,
    })
}

/// Ranks `candidates` (id to values) as root causes of the anomaly on
/// `alarm`.
#[pyfunction]
#[pyo3(signature = (alarm, candidates, config, incident_id="incident"))]
fn localize(
    py: Python<'_>,
    alarm: Vec<f64>,
    candidates: BTreeMap<String, Vec<f64>>,
    config: PyRef<'_, PyRunConfig>,
    incident_id: &str,
) -> PyResult<PyReport> {
    let alarm = KpiSeries::from_values("alarm", alarm).map_err(to_py)?;
    let candidates = candidates
        .into_iter()
        .map(|(id, v)| KpiSeries::from_values(id, v))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    let cfg = config.inner.clone();
    let report = py
        .detach(|| kpiroot::localize(incident_id, &alarm, &candidates, &cfg))
        .map_err(to_py)?;
    Ok(PyReport { inner: report })
}

/// Precision, recall, F1 and Hit@k / NDCG@k for one incident.
#[pyfunction]
#[pyo3(signature = (ranked, predicted, truth, ks=vec![1, 3, 5, 10]))]
fn evaluate(ranked: Vec<String>, predicted: Vec<String>, truth: Vec<String>, ks: Vec<usize>) -> PyResult<BTreeMap<String, f64>> {
    let m = evaluate_incident(&ranked, &predicted, &truth, &ks).map_err(to_py)?;
    let mut out = BTreeMap::new();
    out.insert("precision".to_string(), m.precision);
    out.insert("recall".to_string(), m.recall);
    out.insert("f1".to_string(), m.f1);
    for (k, v) in m.hit_at_k {
        out.insert(format!("hit@{k}"), v);
    }
    for (k, v) in m.ndcg_at_k {
        out.insert(format!("ndcg@{k}"), v);
    }
    Ok(out)
}

#[pyfunction]
fn znormalize(values: Vec<f64>) -> Vec<f64> {
    znormalize_values(&values).values
}

#[pyfunction]
fn paa(values: Vec<f64>, w: usize) -> PyResult<Vec<f64>> {
    Ok(core_paa(&values, w).map_err(to_py)?.values)
}

/// Symbol codes of `values` at PAA size `w`.
#[pyfunction]
#[pyo3(signature = (values, w, alpha=9, encoding="isax"))]
fn symbols(values: Vec<f64>, w: usize, alpha: usize, encoding: &str) -> PyResult<Vec<u32>> {
    let p = core_paa(&znormalize_values(&values).values, w).map_err(to_py)?;
    let bp = gaussian_breakpoints(alpha).map_err(to_py)?;
    let seq = match parse_encoding(encoding)? {
        Encoding::Sax => sax_symbolize(&p, &bp),
        Encoding::Isax => isax_symbolize(&p, &trend_signs(&values, &p), &bp).map_err(to_py)?,
    };
    Ok(seq.symbols)
}

/// Multiset Jaccard similarity of two symbol sequences.
#[pyfunction]
#[pyo3(signature = (a, b, alpha=9, encoding="isax"))]
fn jaccard(a: Vec<u32>, b: Vec<u32>, alpha: usize, encoding: &str) -> PyResult<f64> {
    let encoding = parse_encoding(encoding)?;
    let seq = |symbols| IsaxSequence {
        symbols,
        alpha,
        encoding,
    };
    jaccard_similarity(&seq(a), &seq(b)).map_err(to_py)
}

/// F statistic for `x` helping to predict `y` over `[t_s, t_e)` (the whole
/// series by default).
#[pyfunction]
#[pyo3(signature = (y, x, q=3, t_s=0, t_e=None))]
fn granger_f(y: Vec<f64>, x: Vec<f64>, q: usize, t_s: usize, t_e: Option<usize>) -> PyResult<f64> {
    let seg = AnomalySegment {
        t_s,
        t_e: t_e.unwrap_or(y.len()),
        kind: SegmentKind::Fused,
        score: 0.0,
    };
    Ok(core_granger_f(&y, &x, &seg, q, 1e6).map_err(to_py)?.f_statistic)
}

/// `(trend, seasonal, residual)` of an STL decomposition.
#[pyfunction]
fn stl(values: Vec<f64>, period: usize) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let d = stl_decompose_values(&values, &StlConfig::new(period)).map_err(to_py)?;
    Ok((d.trend, d.seasonal, d.residual))
}

#[pymodule]
fn kpiroot_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(generate_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(load_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(znormalize, m)?)?;
    m.add_function(wrap_pyfunction!(paa, m)?)?;
    m.add_function(wrap_pyfunction!(symbols, m)?)?;
    m.add_function(wrap_pyfunction!(jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(granger_f, m)?)?;
    m.add_function(wrap_pyfunction!(stl, m)?)?;
    Ok(())
}
