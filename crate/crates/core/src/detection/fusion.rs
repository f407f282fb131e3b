use super::{AnomalySegment, SegmentKind};
use crate::series::segment_of;

/// Sorted, duplicate-free union of the component index sets (sample
/// coordinates).
pub fn fuse_anomaly_indices(trend: &[usize], seasonal: &[usize], residual: &[usize]) -> Vec<usize> {
    let mut all: Vec<usize> = trend.iter().chain(seasonal).chain(residual).copied().collect();
    all.sort_unstable();
    all.dedup();
    all
}

/// PAA segments holding at least one of the given sample indices.
pub fn to_paa_indices(samples: &[usize], n: usize, w: usize) -> Vec<usize> {
    let mut out: Vec<usize> = samples
        .iter()
        .filter(|&&i| i < n)
        .map(|&i| segment_of(n, w, i))
        .collect();
    out.dedup();
    out
}

/// Every sample index covered by PAA segments `[t_s, t_e)`.
pub fn paa_span_to_samples(bounds: &[(usize, usize)], t_s: usize, t_e: usize) -> std::ops::Range<usize> {
    bounds[t_s].0..bounds[t_e - 1].1
}

/// Half-open runs of sorted indices below `w` whose internal gaps are at
/// most `max_gap`.
pub fn anomaly_runs(indices: &[usize], max_gap: usize, w: usize) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &i in indices.iter().filter(|&&i| i < w) {
        match runs.last_mut() {
            Some((_, end)) if i < *end + max_gap => *end = i + 1,
            _ => runs.push((i, i + 1)),
        }
    }
    runs
}

/// Groups sorted indices into runs whose internal gaps are at most
/// `max_gap`, then widens runs shorter than `min_len` around their centre
/// and merges any that end up overlapping. Segments are clamped to `[0, w)`.
pub fn segments_from_indices(indices: &[usize], max_gap: usize, min_len: usize, w: usize) -> Vec<AnomalySegment> {
    let mut runs = anomaly_runs(indices, max_gap, w);
    let min_len = min_len.min(w);
    for run in runs.iter_mut() {
        let len = run.1 - run.0;
        if len < min_len {
            let missing = min_len - len;
            let mut start = run.0.saturating_sub(missing / 2);
            if start + min_len > w {
                start = w - min_len;
            }
            *run = (start, start + min_len);
        }
    }
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for run in runs {
        match merged.last_mut() {
            Some((_, end)) if run.0 <= *end => *end = (*end).max(run.1),
            _ => merged.push(run),
        }
    }
    merged
        .into_iter()
        .map(|(t_s, t_e)| AnomalySegment {
            t_s,
            t_e,
            kind: SegmentKind::Fused,
            score: 0.0,
        })
        .collect()
}
