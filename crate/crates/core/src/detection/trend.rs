use serde::{Deserialize, Serialize};

use super::{AnomalySegment, DetectorConfig, SegmentKind};
use crate::error::{KpiError, Result};
use crate::series::PaaVector;

/// Window-sum growth ratios `r_i` for `i` in `first_index..=w - lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRatios {
    pub first_index: usize,
    pub values: Vec<f64>,
}

impl TrendRatios {
    pub fn get(&self, i: usize) -> Option<f64> {
        i.checked_sub(self.first_index).and_then(|k| self.values.get(k).copied())
    }
}

/// Sum of the next `lag` values over the sum of the previous `lag` values,
/// computed on a copy of `p` shifted so its minimum is 1.
pub fn trend_ratio_scores(paa: &PaaVector, lag: usize) -> Result<TrendRatios> {
    trend_ratio_scores_values(&paa.values, lag)
}

pub fn trend_ratio_scores_values(p: &[f64], lag: usize) -> Result<TrendRatios> {
    let w = p.len();
    if lag == 0 || 2 * lag > w {
        return Err(KpiError::param(format!(
            "trend lag {lag} needs 1 <= lag and 2*lag <= w = {w}"
        )));
    }
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = p.iter().map(|v| v - min + 1.0).collect();
    let mut prefix = Vec::with_capacity(w + 1);
    prefix.push(0.0);
    for v in &shifted {
        prefix.push(prefix.last().unwrap() + v);
    }
    let values = (lag..=w - lag)
        .map(|i| {
            let ahead = prefix[i + lag] - prefix[i];
            let behind = prefix[i] - prefix[i - lag];
            ahead / behind
        })
        .collect();
    Ok(TrendRatios {
        first_index: lag,
        values,
    })
}

/// Opens a segment where the growth ratio exceeds `gamma` and closes it at
/// the first later point falling below the opening value.
///
/// The opening index is placed at the steepest rise inside the look-ahead
/// window `[i, i + lag)` of the first exceeding ratio, which is where the
/// surge actually begins.
pub fn detect_trend_overload(paa: &PaaVector, cfg: &DetectorConfig) -> Result<Vec<AnomalySegment>> {
    detect_trend_overload_values(&paa.values, cfg.lag_l, cfg.gamma)
}

pub fn detect_trend_overload_values(p: &[f64], lag: usize, gamma: f64) -> Result<Vec<AnomalySegment>> {
    let ratios = trend_ratio_scores_values(p, lag)?;
    let w = p.len();
    let mut segments = Vec::new();
    let mut i = lag;
    while i <= w - lag {
        let r = ratios.get(i).unwrap_or(0.0);
        if r <= gamma {
            i += 1;
            continue;
        }
        let start = (i..i + lag)
            .max_by(|&a, &b| {
                let da = p[a] - p[a.saturating_sub(1)];
                let db = p[b] - p[b.saturating_sub(1)];
                // earliest index wins ties
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .unwrap_or(i);
        let end = (start + 1..w).find(|&t| p[t] < p[start]).unwrap_or(w);
        segments.push(AnomalySegment {
            t_s: start,
            t_e: end,
            kind: SegmentKind::Trend,
            score: r,
        });
        i = end.max(i + 1);
    }
    Ok(segments)
}
