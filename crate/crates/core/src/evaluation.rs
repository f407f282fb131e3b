//! Set, ranking and detection quality metrics.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{KpiError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcaGroundTruth {
    pub incident_id: String,
    pub root_causes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hit_at_k: BTreeMap<usize, f64>,
    pub ndcg_at_k: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentMetrics {
    pub incident_id: String,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub incidents: usize,
    pub aggregate: MetricReport,
    pub per_incident: Vec<IncidentMetrics>,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub fn precision_recall_f1(predicted: &[String], truth: &[String]) -> Result<(f64, f64, f64)> {
    if truth.is_empty() {
        return Err(KpiError::param("ground truth set is empty"));
    }
    let truth: HashSet<&String> = truth.iter().collect();
    let predicted: HashSet<&String> = predicted.iter().collect();
    let tp = predicted.intersection(&truth).count() as f64;
    let p = if predicted.is_empty() { 0.0 } else { tp / predicted.len() as f64 };
    let r = tp / truth.len() as f64;
    Ok((p, r, f1(p, r)))
}

/// Truths found in the top `k`, over the number that can fit there.
pub fn hit_rate_at_k(ranked: &[String], truth: &[String], k: usize) -> f64 {
    let truth: HashSet<&String> = truth.iter().collect();
    let denom = k.min(truth.len());
    if denom == 0 {
        return 0.0;
    }
    let hits = ranked.iter().take(k).filter(|id| truth.contains(id)).count();
    hits as f64 / denom as f64
}

/// Binary-gain NDCG with a `log2(i + 1)` discount.
pub fn ndcg_at_k(ranked: &[String], truth: &[String], k: usize) -> f64 {
    let truth: HashSet<&String> = truth.iter().collect();
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, id)| truth.contains(id))
        .map(|(i, _)| discount(i))
        .sum();
    let idcg: f64 = (0..k.min(truth.len())).map(discount).sum();
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

/// Detection scores where one flag inside a labeled `[start, end)` window
/// credits the whole window. Recall counts windows; precision counts
/// points, with credited windows as true positives and flags outside every
/// window as false positives.
pub fn point_adjusted_f1(flagged: &[usize], labeled: &[(usize, usize)]) -> (f64, f64, f64) {
    let inside = |i: usize| labeled.iter().any(|&(s, e)| s <= i && i < e);
    let touched: Vec<&(usize, usize)> = labeled
        .iter()
        .filter(|&&(s, e)| flagged.iter().any(|&i| s <= i && i < e))
        .collect();
    let mut credited: Vec<usize> = touched.iter().flat_map(|&&(s, e)| s..e).collect();
    credited.sort_unstable();
    credited.dedup();
    let tp = credited.len() as f64;
    let mut outside: Vec<usize> = flagged.iter().copied().filter(|&i| !inside(i)).collect();
    outside.sort_unstable();
    outside.dedup();
    let fp = outside.len() as f64;
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if labeled.is_empty() { 0.0 } else { touched.len() as f64 / labeled.len() as f64 };
    (p, r, f1(p, r))
}

/// All metrics for one incident.
pub fn evaluate_incident(ranked: &[String], predicted: &[String], truth: &[String], ks: &[usize]) -> Result<MetricReport> {
    let (precision, recall, f1) = precision_recall_f1(predicted, truth)?;
    Ok(MetricReport {
        precision,
        recall,
        f1,
        hit_at_k: ks.iter().map(|&k| (k, hit_rate_at_k(ranked, truth, k))).collect(),
        ndcg_at_k: ks.iter().map(|&k| (k, ndcg_at_k(ranked, truth, k))).collect(),
    })
}

/// Means over incidents. The aggregate F1 is the mean of per-incident F1
/// values.
pub fn aggregate(reports: &[MetricReport]) -> MetricReport {
    if reports.is_empty() {
        return MetricReport::default();
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let keys: Vec<usize> = reports[0].hit_at_k.keys().copied().collect();
    MetricReport {
        precision: mean(&|r| r.precision),
        recall: mean(&|r| r.recall),
        f1: mean(&|r| r.f1),
        hit_at_k: keys
            .iter()
            .map(|&k| (k, mean(&|r| r.hit_at_k.get(&k).copied().unwrap_or(0.0))))
            .collect(),
        ndcg_at_k: keys
            .iter()
            .map(|&k| (k, mean(&|r| r.ndcg_at_k.get(&k).copied().unwrap_or(0.0))))
            .collect(),
    }
}

pub fn build_report(per_incident: Vec<IncidentMetrics>) -> EvaluationReport {
    let metrics: Vec<MetricReport> = per_incident.iter().map(|m| m.metrics.clone()).collect();
    EvaluationReport {
        incidents: per_incident.len(),
        aggregate: aggregate(&metrics),
        per_incident,
    }
}
