//! Gaussian breakpoints, SAX / trend-aware SAX symbols and multiset
//! Jaccard similarity.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{KpiError, Result};
use crate::series::{PaaVector, TrendSigns};

/// Cut points splitting the standard normal into `alpha` equiprobable bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakpoints {
    pub alpha: usize,
    pub betas: Vec<f64>,
}

impl Breakpoints {
    /// 1-based bin of `value`. A value equal to a breakpoint belongs to the
    /// bin above it.
    pub fn level(&self, value: f64) -> u32 {
        self.betas.partition_point(|&b| b <= value) as u32 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Sax,
    Isax,
}

/// A symbol string; codes are plain levels for `Sax` and `2*alpha - sign*level`
/// for `Isax`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsaxSequence {
    pub symbols: Vec<u32>,
    pub alpha: usize,
    pub encoding: Encoding,
}

impl IsaxSequence {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Keeps only the symbols at `indices` (in the given order).
    pub fn select(&self, indices: &[usize]) -> IsaxSequence {
        IsaxSequence {
            symbols: indices.iter().map(|&i| self.symbols[i]).collect(),
            alpha: self.alpha,
            encoding: self.encoding,
        }
    }

    /// Largest code this encoding can emit.
    pub fn max_code(&self) -> u32 {
        match self.encoding {
            Encoding::Sax => self.alpha as u32,
            Encoding::Isax => 3 * self.alpha as u32,
        }
    }
}

pub fn gaussian_breakpoints(alpha: usize) -> Result<Breakpoints> {
    if alpha < 2 {
        return Err(KpiError::param(format!("alphabet size {alpha} must be at least 2")));
    }
    let normal = Normal::standard();
    let betas = (1..alpha)
        .map(|k| normal.inverse_cdf(k as f64 / alpha as f64))
        .collect();
    Ok(Breakpoints { alpha, betas })
}

pub fn sax_symbolize(paa: &PaaVector, bp: &Breakpoints) -> IsaxSequence {
    IsaxSequence {
        symbols: paa.values.iter().map(|&p| bp.level(p)).collect(),
        alpha: bp.alpha,
        encoding: Encoding::Sax,
    }
}

/// Trend-aware symbols `2*alpha - phi*level`. Flat segments (`phi = 0`)
/// all collapse onto code `2*alpha`.
pub fn isax_symbolize(paa: &PaaVector, phi: &TrendSigns, bp: &Breakpoints) -> Result<IsaxSequence> {
    if paa.values.len() != phi.signs.len() {
        return Err(KpiError::param(format!(
            "PAA length {} does not match trend sign length {}",
            paa.values.len(),
            phi.signs.len()
        )));
    }
    let two_alpha = 2 * bp.alpha as i64;
    let symbols = paa
        .values
        .iter()
        .zip(&phi.signs)
        .map(|(&p, &s)| (two_alpha - s as i64 * bp.level(p) as i64) as u32)
        .collect();
    Ok(IsaxSequence {
        symbols,
        alpha: bp.alpha,
        encoding: Encoding::Isax,
    })
}

/// Multiset Jaccard: sum of per-code minimum counts over sum of maximum
/// counts. Two empty sequences are identical (1.0).
pub fn jaccard_similarity(a: &IsaxSequence, b: &IsaxSequence) -> Result<f64> {
    if a.alpha != b.alpha || a.encoding != b.encoding {
        return Err(KpiError::param(format!(
            "cannot compare {:?}/alpha={} with {:?}/alpha={}",
            a.encoding, a.alpha, b.encoding, b.alpha
        )));
    }
    if a.is_empty() && b.is_empty() {
        return Ok(1.0);
    }
    let size = a.max_code() as usize + 1;
    let mut counts_a = vec![0u32; size];
    let mut counts_b = vec![0u32; size];
    for &s in &a.symbols {
        counts_a[s as usize] += 1;
    }
    for &s in &b.symbols {
        counts_b[s as usize] += 1;
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (&ca, &cb) in counts_a.iter().zip(&counts_b) {
        inter += ca.min(cb) as u64;
        union += ca.max(cb) as u64;
    }
    Ok(inter as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{paa, trend_signs, znormalize_values};
    use proptest::prelude::*;

    fn pv(values: Vec<f64>) -> PaaVector {
        let n = values.len();
        PaaVector {
            segment_bounds: (0..n).map(|i| (i, i + 1)).collect(),
            n,
            values,
        }
    }

    #[test]
    fn breakpoint_values() {
        assert_eq!(gaussian_breakpoints(2).unwrap().betas, vec![0.0]);
        let b4 = gaussian_breakpoints(4).unwrap().betas;
        for (b, e) in b4.iter().zip([-0.6745, 0.0, 0.6745]) {
            assert!((b - e).abs() < 1e-3);
        }
        let b3 = gaussian_breakpoints(3).unwrap().betas;
        for (b, e) in b3.iter().zip([-0.4307, 0.4307]) {
            assert!((b - e).abs() < 1e-3);
        }
        assert!(gaussian_breakpoints(1).is_err());
    }

    #[test]
    fn breakpoints_match_bisection_quantiles() {
        // independent route: invert the error function by bisection
        let cdf = |x: f64| 0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2));
        for alpha in 2..=20 {
            let bp = gaussian_breakpoints(alpha).unwrap();
            for (k, beta) in bp.betas.iter().enumerate() {
                let target = (k + 1) as f64 / alpha as f64;
                let (mut lo, mut hi) = (-10.0, 10.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if cdf(mid) < target {
                        lo = mid
                    } else {
                        hi = mid
                    }
                }
                assert!((beta - 0.5 * (lo + hi)).abs() < 1e-6);
            }
            assert!(bp.betas.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn sax_examples() {
        let bp = gaussian_breakpoints(4).unwrap();
        assert_eq!(sax_symbolize(&pv(vec![-10.0, 0.0, 10.0]), &bp).symbols, vec![1, 3, 4]);
        assert_eq!(sax_symbolize(&pv(vec![-5.0, -4.0]), &bp).symbols, vec![1, 1]);
        let bp2 = gaussian_breakpoints(2).unwrap();
        assert_eq!(sax_symbolize(&pv(vec![-1.0, 1.0]), &bp2).symbols, vec![1, 2]);
    }

    #[test]
    fn isax_examples() {
        let bp = gaussian_breakpoints(4).unwrap();
        // -0.3 lies in level 2 for alpha = 4
        let p = pv(vec![-0.3, -0.3, -0.3]);
        let phi = TrendSigns { signs: vec![1, -1, 0] };
        assert_eq!(isax_symbolize(&p, &phi, &bp).unwrap().symbols, vec![6, 10, 8]);
        let short = TrendSigns { signs: vec![1] };
        assert!(isax_symbolize(&p, &short, &bp).is_err());

        let flat = znormalize_values(&[3.0; 12]);
        let fp = paa(&flat.values, 4).unwrap();
        let codes = isax_symbolize(&fp, &trend_signs(&[3.0; 12], &fp), &bp).unwrap();
        assert_eq!(codes.symbols, vec![8; 4]);
    }

    #[test]
    fn isax_injective_over_level_sign_pairs() {
        for alpha in 2..=12usize {
            let bp = gaussian_breakpoints(alpha).unwrap();
            let mut seen = std::collections::HashMap::new();
            for level in 1..=alpha {
                // pick a value strictly inside bin `level`
                let lo = if level == 1 { -50.0 } else { bp.betas[level - 2] };
                let hi = if level == alpha { 50.0 } else { bp.betas[level - 1] };
                let p = pv(vec![0.5 * (lo + hi); 2]);
                for sign in [-1i8, 1] {
                    let code = isax_symbolize(&p, &TrendSigns { signs: vec![sign; 2] }, &bp).unwrap().symbols[0];
                    assert!(code as usize >= alpha && code as usize <= 3 * alpha);
                    if let Some(prev) = seen.insert(code, (level, sign)) {
                        panic!("code {code} shared by {prev:?} and {:?}", (level, sign));
                    }
                }
            }
        }
    }

    fn seq(symbols: Vec<u32>) -> IsaxSequence {
        IsaxSequence { symbols, alpha: 4, encoding: Encoding::Isax }
    }

    #[test]
    fn jaccard_examples() {
        let a = seq(vec![5, 5, 6]);
        let b = seq(vec![5, 6, 6]);
        assert_eq!(jaccard_similarity(&a, &b).unwrap(), 0.5);
        assert_eq!(jaccard_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(jaccard_similarity(&a, &seq(vec![7, 8])).unwrap(), 0.0);
        assert_eq!(jaccard_similarity(&seq(vec![]), &seq(vec![])).unwrap(), 1.0);
        let sax = IsaxSequence { symbols: vec![1], alpha: 4, encoding: Encoding::Sax };
        assert!(jaccard_similarity(&a, &sax).is_err());
        let other_alpha = IsaxSequence { symbols: vec![5], alpha: 5, encoding: Encoding::Isax };
        assert!(jaccard_similarity(&a, &other_alpha).is_err());
    }

    proptest! {
        #[test]
        fn jaccard_symmetric_bounded(
            a in prop::collection::vec(4u32..=12, 0..30),
            b in prop::collection::vec(4u32..=12, 0..30),
        ) {
            let (sa, sb) = (seq(a.clone()), seq(b.clone()));
            let j = jaccard_similarity(&sa, &sb).unwrap();
            prop_assert_eq!(j, jaccard_similarity(&sb, &sa).unwrap());
            prop_assert!((0.0..=1.0).contains(&j));
            let mut sorted_a = a.clone();
            let mut sorted_b = b.clone();
            sorted_a.sort();
            sorted_b.sort();
            prop_assert_eq!(j == 1.0, sorted_a == sorted_b);
        }

        #[test]
        fn symbols_invariant_under_positive_affine_maps(
            x in prop::collection::vec(-100.0f64..100.0, 8..120),
            a in 0.01f64..50.0,
            b in -100.0f64..100.0,
        ) {
            let bp = gaussian_breakpoints(9).unwrap();
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let w = (x.len() / 4).max(1);
            let encode = |v: &[f64]| {
                let z = znormalize_values(v);
                let p = paa(&z.values, w).unwrap();
                isax_symbolize(&p, &trend_signs(v, &p), &bp).unwrap()
            };
            let (zx, zy) = (znormalize_values(&x), znormalize_values(&y));
            prop_assume!(zx.source_std > 0.0 && zy.source_std > 0.0);
            // values sitting within rounding distance of a breakpoint may flip
            let p = paa(&zx.values, w).unwrap();
            prop_assume!(p.values.iter().all(|v| bp.betas.iter().all(|b| (v - b).abs() > 1e-9)));
            prop_assert_eq!(encode(&x), encode(&y));
        }
    }
}
