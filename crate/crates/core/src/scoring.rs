//! Score fusion, ranking and root-cause selection.

use serde::{Deserialize, Serialize};

use crate::error::{KpiError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationScore {
    pub kpi_id: String,
    pub similarity: f64,
    pub causality_raw: f64,
    pub causality_scaled: f64,
    pub combined: f64,
    /// 1-based; 0 until ranked.
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    TopK,
    RelativeThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub mode: SelectionMode,
    pub k: usize,
    pub theta: f64,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self::relative_threshold(0.8)
    }
}

impl SelectionPolicy {
    pub fn top_k(k: usize) -> Self {
        Self {
            mode: SelectionMode::TopK,
            k,
            theta: 0.8,
        }
    }

    pub fn relative_threshold(theta: f64) -> Self {
        Self {
            mode: SelectionMode::RelativeThreshold,
            k: 10,
            theta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            SelectionMode::TopK if self.k == 0 => Err(KpiError::param("top-k selection needs k >= 1")),
            SelectionMode::RelativeThreshold if !(self.theta > 0.0 && self.theta <= 1.0) => Err(
                KpiError::param(format!("theta {} must lie in (0, 1]", self.theta)),
            ),
            _ => Ok(()),
        }
    }
}

/// How raw F values enter the combined score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalityScaling {
    /// Min-max across the candidate cohort.
    MinMax,
    /// Raw F, unbounded.
    Raw,
}

/// Min-max scaling to `[0, 1]`; a zero range maps everything to 0.5.
pub fn scale_causality(f_values: &[f64]) -> Vec<f64> {
    let lo = f_values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = f_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    f_values
        .iter()
        .map(|f| if range > 0.0 { (f - lo) / range } else { 0.5 })
        .collect()
}

/// `lambda * similarity + (1 - lambda) * causality`.
pub fn correlation_score(similarity: f64, causality_scaled: f64, lambda: f64) -> Result<f64> {
    for (name, v) in [("similarity", similarity), ("causality", causality_scaled), ("lambda", lambda)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(KpiError::param(format!("{name} {v} outside [0, 1]")));
        }
    }
    Ok(lambda * similarity + (1.0 - lambda) * causality_scaled)
}

/// Builds scores for a cohort. With [`CausalityScaling::Raw`] the
/// combined value is no longer bounded by 1.
pub fn score_candidates(
    ids: &[String],
    similarity: &[f64],
    causality_raw: &[f64],
    lambda: f64,
    scaling: CausalityScaling,
) -> Result<Vec<CorrelationScore>> {
    if ids.len() != similarity.len() || ids.len() != causality_raw.len() {
        return Err(KpiError::param("score inputs differ in length"));
    }
    let scaled = scale_causality(causality_raw);
    ids.iter()
        .enumerate()
        .map(|(i, id)| {
            let combined = match scaling {
                CausalityScaling::MinMax => correlation_score(similarity[i], scaled[i], lambda)?,
                CausalityScaling::Raw => {
                    correlation_score(similarity[i], 0.0, lambda)? + (1.0 - lambda) * causality_raw[i]
                }
            };
            Ok(CorrelationScore {
                kpi_id: id.clone(),
                similarity: similarity[i],
                causality_raw: causality_raw[i],
                causality_scaled: scaled[i],
                combined,
                rank: 0,
            })
        })
        .collect()
}

/// Sorts by combined score (descending), then similarity (descending),
/// then id, and assigns ranks.
pub fn rank_candidates(mut scores: Vec<CorrelationScore>) -> Vec<CorrelationScore> {
    scores.sort_by(|a, b| {
        b.combined
            .total_cmp(&a.combined)
            .then(b.similarity.total_cmp(&a.similarity))
            .then_with(|| a.kpi_id.cmp(&b.kpi_id))
    });
    for (i, s) in scores.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    scores
}

pub fn select_root_causes(ranked: &[CorrelationScore], policy: &SelectionPolicy) -> Result<Vec<String>> {
    policy.validate()?;
    if ranked.is_empty() {
        return Err(KpiError::param("no candidates to select from"));
    }
    let chosen = match policy.mode {
        SelectionMode::TopK => ranked.iter().take(policy.k).collect::<Vec<_>>(),
        SelectionMode::RelativeThreshold => {
            let max = ranked.iter().map(|s| s.combined).fold(f64::NEG_INFINITY, f64::max);
            let cut = policy.theta * max;
            ranked.iter().filter(|s| s.combined >= cut).collect()
        }
    };
    Ok(chosen.into_iter().map(|s| s.kpi_id.clone()).collect())
}
