//! Series representation, z-normalization, piecewise aggregation and
//! per-segment trend signs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KpiError, Result};

/// A uniformly sampled monitoring series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSeries {
    id: String,
    start_time: i64,
    interval: u64,
    values: Vec<f64>,
}

impl KpiSeries {
    /// Builds a series, rejecting non-finite samples, a zero interval and
    /// fewer than two samples.
    pub fn new(
        id: impl Into<String>,
        start_time: i64,
        interval: u64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if interval == 0 {
            return Err(KpiError::InvalidData(format!(
                "series {id}: sampling interval must be positive"
            )));
        }
        if values.len() < 2 {
            return Err(KpiError::InsufficientData {
                needed: 2,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(KpiError::InvalidData(format!(
                "series {id}: non-finite value at index {pos}"
            )));
        }
        Ok(Self {
            id,
            start_time,
            interval,
            values,
        })
    }

    /// Convenience constructor with epoch 0 and a one-second cadence.
    pub fn from_values(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::new(id, 0, 1, values)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn start_time(&self) -> i64 {
        self.start_time
    }

    pub fn interval(&self) -> u64 {
        self.interval
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> i64 {
        self.start_time + (index as i64) * self.interval as i64
    }

    /// Reads a `timestamp,value` CSV file. Errors carry the 1-based line
    /// number of the offending row.
    pub fn read_csv(path: impl AsRef<Path>, id: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| KpiError::io(path, e))?;
        Self::parse_csv(BufReader::new(file), path, id)
    }

    fn parse_csv<R: Read>(reader: R, path: &Path, id: impl Into<String>) -> Result<Self> {
        let parse_err = |line: usize, message: String| KpiError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
        if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "value" {
            return Err(parse_err(
                1,
                format!("expected header `timestamp,value`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            ));
        }

        let mut timestamps: Vec<i64> = Vec::new();
        let mut values = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let line = row + 2;
            let record = record.map_err(|e| parse_err(line, e.to_string()))?;
            if record.len() != 2 {
                return Err(parse_err(line, format!("expected 2 fields, found {}", record.len())));
            }
            let ts: i64 = record[0]
                .parse()
                .map_err(|_| parse_err(line, format!("invalid timestamp `{}`", &record[0])))?;
            let value: f64 = record[1]
                .parse()
                .map_err(|_| parse_err(line, format!("invalid value `{}`", &record[1])))?;
            if !value.is_finite() {
                return Err(parse_err(line, format!("non-finite value `{}`", &record[1])));
            }
            if let Some(&prev) = timestamps.last() {
                if ts <= prev {
                    return Err(parse_err(line, "timestamps must be strictly increasing".into()));
                }
                if timestamps.len() >= 2 {
                    let stride = timestamps[1] - timestamps[0];
                    if ts - prev != stride {
                        return Err(parse_err(
                            line,
                            format!("irregular sampling: stride {} differs from {}", ts - prev, stride),
                        ));
                    }
                }
            }
            timestamps.push(ts);
            values.push(value);
        }
        if values.len() < 2 {
            return Err(KpiError::InsufficientData {
                needed: 2,
                actual: values.len(),
            });
        }
        let interval = (timestamps[1] - timestamps[0]) as u64;
        Self::new(id, timestamps[0], interval, values)
    }

    /// Writes the series as a `timestamp,value` CSV. Values use the
    /// shortest round-trip representation, so reading back is bit-exact.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| KpiError::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(out, "timestamp,value")?;
            for (i, v) in self.values.iter().enumerate() {
                writeln!(out, "{},{}", self.timestamp(i), v)?;
            }
            out.flush()
        };
        write().map_err(|e| KpiError::io(path, e))
    }
}

/// Zero-mean, unit-variance copy of a series along with the statistics
/// used to produce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub values: Vec<f64>,
    pub source_mean: f64,
    pub source_std: f64,
}

/// Segment means of a series over a balanced contiguous partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaaVector {
    pub values: Vec<f64>,
    /// Source length the partition was built over.
    pub n: usize,
    /// Half-open `[start, end)` source ranges, one per segment.
    pub segment_bounds: Vec<(usize, usize)>,
}

impl PaaVector {
    pub fn w(&self) -> usize {
        self.values.len()
    }

    /// Index of the segment containing source sample `index`.
    pub fn segment_of(&self, index: usize) -> usize {
        segment_of(self.n, self.w(), index)
    }
}

/// Per-segment slope signs, each in {-1, 0, +1}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendSigns {
    pub signs: Vec<i8>,
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn is_degenerate(mean: f64, std: f64) -> bool {
    std <= 1e-12 * mean.abs().max(1.0)
}

pub fn znormalize(series: &KpiSeries) -> NormalizedSeries {
    znormalize_values(series.values())
}

/// Z-normalizes with population statistics. A constant series maps to
/// all zeros with `source_std = 0`.
pub fn znormalize_values(values: &[f64]) -> NormalizedSeries {
    let (mean, std) = mean_std(values);
    if is_degenerate(mean, std) {
        return NormalizedSeries {
            values: vec![0.0; values.len()],
            source_mean: mean,
            source_std: 0.0,
        };
    }
    NormalizedSeries {
        values: values.iter().map(|v| (v - mean) / std).collect(),
        source_mean: mean,
        source_std: std,
    }
}

/// Balanced contiguous partition of `n` samples into `w` segments: the
/// first `n % w` segments hold one extra sample.
pub fn segment_bounds(n: usize, w: usize) -> Vec<(usize, usize)> {
    let base = n / w;
    let extra = n % w;
    let mut bounds = Vec::with_capacity(w);
    let mut start = 0;
    for j in 0..w {
        let len = base + usize::from(j < extra);
        bounds.push((start, start + len));
        start += len;
    }
    bounds
}

/// Segment index of sample `index` under [`segment_bounds`].
pub fn segment_of(n: usize, w: usize, index: usize) -> usize {
    let base = n / w;
    let extra = n % w;
    let long_span = extra * (base + 1);
    if index < long_span {
        index / (base + 1)
    } else {
        extra + (index - long_span) / base
    }
}

pub fn paa(values: &[f64], w: usize) -> Result<PaaVector> {
    let n = values.len();
    if w == 0 || w > n {
        return Err(KpiError::param(format!(
            "PAA size w = {w} must lie in [1, {n}]"
        )));
    }
    let bounds = segment_bounds(n, w);
    let means = bounds
        .iter()
        .map(|&(s, e)| values[s..e].iter().sum::<f64>() / (e - s) as f64)
        .collect();
    Ok(PaaVector {
        values: means,
        n,
        segment_bounds: bounds,
    })
}

/// Sign of the endpoint difference of each PAA segment of `raw`.
pub fn trend_signs(raw: &[f64], paa: &PaaVector) -> TrendSigns {
    let signs = paa
        .segment_bounds
        .iter()
        .map(|&(s, e)| {
            let d = raw[e - 1] - raw[s];
            if d > 0.0 {
                1
            } else if d < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect();
    TrendSigns { signs }
}

/// Default PAA size, `round(sqrt(n))` clamped to `[1, n]`.
pub fn default_w(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).clamp(1, n.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn znormalize_small_example() {
        let s = KpiSeries::from_values("a", vec![1.0, 2.0, 3.0]).unwrap();
        let z = znormalize(&s);
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (v, e) in z.values.iter().zip(expected) {
            assert!((v - e).abs() < 1e-4);
        }
    }

    #[test]
    fn znormalize_constant_is_zero() {
        let s = KpiSeries::from_values("c", vec![5.0; 4]).unwrap();
        let z = znormalize(&s);
        assert_eq!(z.values, vec![0.0; 4]);
        assert_eq!(z.source_std, 0.0);
        let z = znormalize_values(&[0.1, 0.1, 0.1]);
        assert_eq!(z.values, vec![0.0; 3]);
    }

    #[test]
    fn rejects_bad_series() {
        assert!(KpiSeries::from_values("x", vec![1.0, f64::NAN]).is_err());
        assert!(KpiSeries::from_values("x", vec![1.0, f64::INFINITY]).is_err());
        assert!(KpiSeries::from_values("x", vec![1.0]).is_err());
        assert!(KpiSeries::new("x", 0, 0, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn paa_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(paa(&x, 3).unwrap().values, vec![1.5, 3.5, 5.5]);
        assert_eq!(paa(&x, 6).unwrap().values, x.to_vec());
        assert_eq!(paa(&[2.5; 7], 3).unwrap().values, vec![2.5; 3]);
        assert!(paa(&x, 0).is_err());
        assert!(paa(&x, 7).is_err());
    }

    #[test]
    fn balanced_partition() {
        let b = segment_bounds(10, 4);
        assert_eq!(b, vec![(0, 3), (3, 6), (6, 8), (8, 10)]);
        for i in 0..10 {
            let j = segment_of(10, 4, i);
            assert!(b[j].0 <= i && i < b[j].1);
        }
    }

    #[test]
    fn trend_sign_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let p = paa(&x, 3).unwrap();
        assert_eq!(trend_signs(&x, &p).signs, vec![1, 1, 1]);
        let x = [3.0, 1.0, 1.0, 3.0];
        let p = paa(&x, 2).unwrap();
        assert_eq!(trend_signs(&x, &p).signs, vec![-1, 1]);
        let x = [4.0; 9];
        let p = paa(&x, 3).unwrap();
        assert_eq!(trend_signs(&x, &p).signs, vec![0, 0, 0]);
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = KpiSeries::new("s", 1_700_000_000, 60, vec![0.1, 2.0 / 3.0, -1e-7, 12345.678]).unwrap();
        s.write_csv(&path).unwrap();
        let back = KpiSeries::read_csv(&path, "s").unwrap();
        assert_eq!(back, s);

        std::fs::write(&path, "timestamp,value\n0,1.0\n60,abc\n").unwrap();
        match KpiSeries::read_csv(&path, "s") {
            Err(KpiError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "timestamp,value\n0,1.0\n60,2\n130,3\n").unwrap();
        match KpiSeries::read_csv(&path, "s") {
            Err(KpiError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "time,value\n0,1.0\n").unwrap();
        assert!(matches!(KpiSeries::read_csv(&path, "s"), Err(KpiError::Parse { line: 1, .. })));
    }

    fn series_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, 2..200)
    }

    proptest! {
        #[test]
        fn affine_invariance(x in series_strategy(), a in 0.01f64..100.0, b in -1e3f64..1e3) {
            let zx = znormalize_values(&x);
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let zy = znormalize_values(&y);
            if zx.source_std > 0.0 && zy.source_std > 0.0 {
                for (u, v) in zx.values.iter().zip(&zy.values) {
                    prop_assert!((u - v).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn normalized_moments(x in series_strategy()) {
            let z = znormalize_values(&x);
            let (m, s) = mean_std(&z.values);
            if z.source_std > 0.0 {
                prop_assert!(m.abs() < 1e-9);
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn paa_mean_preservation(x in series_strategy(), frac in 0.0f64..1.0) {
            let n = x.len();
            let w = 1 + ((n - 1) as f64 * frac) as usize;
            let p = paa(&x, w).unwrap();
            let (mx, _) = mean_std(&x);
            let (mp, _) = mean_std(&p.values);
            let scale = x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            if n % w == 0 {
                prop_assert!((mx - mp).abs() <= 1e-9 * scale);
            }
            // unequal segment sizes: the size-weighted mean is what survives
            let sizes: Vec<usize> = p.segment_bounds.iter().map(|(s, e)| e - s).collect();
            let weighted = p.values.iter().zip(&sizes).map(|(v, &k)| v * k as f64).sum::<f64>() / n as f64;
            prop_assert!((mx - weighted).abs() <= 1e-9 * scale);
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            prop_assert_eq!(p.segment_bounds[0].0, 0);
            prop_assert_eq!(p.segment_bounds[w - 1].1, n);
        }

        #[test]
        fn paa_idempotent(x in series_strategy(), frac in 0.0f64..1.0) {
            let w = 1 + ((x.len() - 1) as f64 * frac) as usize;
            let p = paa(&x, w).unwrap();
            let pp = paa(&p.values, w).unwrap();
            prop_assert_eq!(pp.values, p.values);
        }

        #[test]
        fn signs_flip_under_negation(x in series_strategy(), frac in 0.0f64..1.0) {
            let w = 1 + ((x.len() - 1) as f64 * frac) as usize;
            let p = paa(&x, w).unwrap();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let pn = paa(&neg, w).unwrap();
            let s = trend_signs(&x, &p).signs;
            let sn = trend_signs(&neg, &pn).signs;
            for (a, b) in s.iter().zip(&sn) {
                prop_assert_eq!(*a, -*b);
            }
        }
    }
}
