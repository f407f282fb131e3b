//! Lagged least-squares fits and the Granger F statistic over an anomaly
//! segment.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::detection::AnomalySegment;
use crate::error::{KpiError, Result};

/// Cap used when the augmented model fits perfectly but the own-lag model
/// does not.
pub const DEFAULT_F_MAX: f64 = 1e6;

const CONDITION_LIMIT: f64 = 1e12;
const RIDGE_FACTOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArFit {
    pub order: usize,
    /// Intercept, own lags `1..=q`, then (augmented fits only) exogenous
    /// lags `1..=q`.
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    /// True when the Gram matrix needed the ridge term.
    pub regularized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    pub f_statistic: f64,
    pub df1: usize,
    pub df2: usize,
    pub restricted_rss: f64,
    pub unrestricted_rss: f64,
}

/// Least squares through the normal equations, with a ridge of
/// `1e-8 * trace` when the Gram matrix is ill-conditioned.
fn least_squares(design: &DMatrix<f64>, target: &DVector<f64>) -> (DVector<f64>, bool) {
    let gram = design.transpose() * design;
    let rhs = design.transpose() * target;
    let eig = gram.clone().symmetric_eigenvalues();
    let max = eig.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let regularize = !(min > 0.0) || max / min > CONDITION_LIMIT;
    let mut system = gram;
    if regularize {
        let ridge = RIDGE_FACTOR * system.trace().max(f64::MIN_POSITIVE);
        for i in 0..system.nrows() {
            system[(i, i)] += ridge;
        }
    }
    let beta = match system.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => system.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
    };
    (beta, regularize)
}

fn check_len(len: usize, q: usize) -> Result<()> {
    if q == 0 {
        return Err(KpiError::param("autoregressive order must be at least 1"));
    }
    if len <= 2 * q + 1 {
        return Err(KpiError::InsufficientData {
            needed: 2 * q + 2,
            actual: len,
        });
    }
    Ok(())
}

fn fit(y: &[f64], x: Option<&[f64]>, q: usize) -> ArFit {
    let rows = y.len() - q;
    let cols = 1 + q + if x.is_some() { q } else { 0 };
    let raw = DMatrix::from_fn(rows, cols, |r, c| {
        let t = r + q;
        match c {
            0 => 1.0,
            c if c <= q => y[t - c],
            c => x.expect("exogenous column")[t - (c - q)],
        }
    });
    // lag columns are centred and scaled so the conditioning test does not
    // depend on the units or offset of either series
    let mut design = raw.clone();
    let mut centre = vec![0.0; cols];
    let mut scale = vec![1.0; cols];
    for c in 1..cols {
        let col = raw.column(c);
        let m = col.mean();
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / rows as f64).sqrt();
        // a constant lag column duplicates the intercept and is zeroed
        let varies = sd > 1e-12 * m.abs() && sd > 0.0;
        centre[c] = m;
        scale[c] = if varies { sd } else { 0.0 };
        for r in 0..rows {
            design[(r, c)] = if varies { (raw[(r, c)] - m) / sd } else { 0.0 };
        }
    }
    let target = DVector::from_iterator(rows, y[q..].iter().copied());
    let (beta_std, regularized) = least_squares(&design, &target);
    let residuals: Vec<f64> = (&target - &design * &beta_std).iter().copied().collect();
    let rss = residuals.iter().map(|e| e * e).sum();
    let mut coefficients = vec![0.0; cols];
    coefficients[0] = beta_std[0];
    for c in 1..cols {
        if scale[c] > 0.0 {
            coefficients[c] = beta_std[c] / scale[c];
            coefficients[0] -= coefficients[c] * centre[c];
        }
    }
    ArFit {
        order: q,
        coefficients,
        residuals,
        rss,
        regularized,
    }
}

/// Regresses `y_t` on an intercept and its own lags `1..=q`, for
/// `t = q..len`.
pub fn fit_ar(y: &[f64], q: usize) -> Result<ArFit> {
    check_len(y.len(), q)?;
    Ok(fit(y, None, q))
}

/// As [`fit_ar`] with lags `1..=q` of `x` added.
pub fn fit_arx(y: &[f64], x: &[f64], q: usize) -> Result<ArFit> {
    if x.len() != y.len() {
        return Err(KpiError::param(format!(
            "series lengths differ: {} vs {}",
            y.len(),
            x.len()
        )));
    }
    check_len(y.len(), q)?;
    Ok(fit(y, Some(x), q))
}

/// Residual sums below this are treated as exact fits.
fn exact_fit_tol(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let sumsq: f64 = y.iter().map(|v| v * v).sum();
    1e-12 * tss.max(1e-12 * sumsq).max(f64::MIN_POSITIVE)
}

/// F statistic for "`x` helps predict `y`" over `segment`, fitting
/// `t` in `[t_s + q, t_e)`.
///
/// `df2` counts residuals minus unrestricted parameters. A perfect
/// unrestricted fit gives 0 when the restricted fit is also perfect and
/// `f_max` otherwise.
pub fn granger_f(y: &[f64], x: &[f64], segment: &AnomalySegment, q: usize, f_max: f64) -> Result<GrangerResult> {
    if x.len() != y.len() {
        return Err(KpiError::param("alarm and candidate PAA lengths differ"));
    }
    if segment.t_e > y.len() || segment.t_s >= segment.t_e {
        return Err(KpiError::param(format!(
            "segment [{}, {}) outside [0, {})",
            segment.t_s,
            segment.t_e,
            y.len()
        )));
    }
    let ys = &y[segment.t_s..segment.t_e];
    let xs = &x[segment.t_s..segment.t_e];
    let len = ys.len();
    let params = 2 * q + 1;
    if q == 0 || len < q + params + 1 {
        return Err(KpiError::InsufficientData {
            needed: 3 * q + 2,
            actual: len,
        });
    }
    let df2 = len - q - params;
    let restricted = fit(ys, None, q);
    let unrestricted = fit(ys, Some(xs), q);
    // the augmented model contains the own-lag model, so its optimum
    // cannot be worse; ridge round-off is clipped here
    let rss_r = restricted.rss;
    let rss_u = unrestricted.rss.min(rss_r);
    let tol = exact_fit_tol(&ys[q..]);
    let f = if rss_u <= tol {
        if rss_r <= tol {
            0.0
        } else {
            f_max
        }
    } else {
        (((rss_r - rss_u) / q as f64) / (rss_u / df2 as f64)).clamp(0.0, f_max)
    };
    Ok(GrangerResult {
        f_statistic: f,
        df1: q,
        df2,
        restricted_rss: rss_r,
        unrestricted_rss: rss_u,
    })
}

/// Largest F over the segments that are long enough; `None` when none is.
pub fn max_granger_f(y: &[f64], x: &[f64], segments: &[AnomalySegment], q: usize, f_max: f64) -> Option<f64> {
    segments
        .iter()
        .filter_map(|s| granger_f(y, x, s, q, f_max).ok())
        .map(|r| r.f_statistic)
        .fold(None, |acc: Option<f64>, f| Some(acc.map_or(f, |a| a.max(f))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::SegmentKind;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};

    fn seg(t_s: usize, t_e: usize) -> AnomalySegment {
        AnomalySegment {
            t_s,
            t_e,
            kind: SegmentKind::Fused,
            score: 0.0,
        }
    }

    fn gauss(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// Gaussian elimination with partial pivoting on the normal equations.
    fn oracle_rss(y: &[f64], x: Option<&[f64]>, q: usize) -> f64 {
        let rows: Vec<Vec<f64>> = (q..y.len())
            .map(|t| {
                let mut r = vec![1.0];
                r.extend((1..=q).map(|k| y[t - k]));
                if let Some(x) = x {
                    r.extend((1..=q).map(|k| x[t - k]));
                }
                r
            })
            .collect();
        let p = rows[0].len();
        let mut a = vec![vec![0.0; p + 1]; p];
        for (r, t) in rows.iter().zip(q..) {
            for i in 0..p {
                for j in 0..p {
                    a[i][j] += r[i] * r[j];
                }
                a[i][p] += r[i] * y[t];
            }
        }
        for col in 0..p {
            let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            for row in 0..p {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..=p {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        let beta: Vec<f64> = (0..p).map(|i| a[i][p] / a[i][i]).collect();
        rows.iter()
            .zip(q..)
            .map(|(r, t)| {
                let fit: f64 = r.iter().zip(&beta).map(|(u, b)| u * b).sum();
                (y[t] - fit).powi(2)
            })
            .sum()
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let mut y = vec![1.0];
        for _ in 1..50 {
            let prev = *y.last().unwrap();
            y.push(0.5 * prev);
        }
        let f = fit_ar(&y, 1).unwrap();
        assert!((f.coefficients[1] - 0.5).abs() < 1e-6, "{:?}", f.coefficients);
        assert!(f.rss < 1e-10);
    }

    #[test]
    fn constant_series_fit() {
        let f = fit_ar(&[4.0; 30], 3).unwrap();
        assert!(f.regularized);
        assert!(f.rss < 1e-12);
        assert!(fit_ar(&[1.0; 7], 3).is_err());
    }

    #[test]
    fn white_noise_rss_below_tss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = gauss(80, &mut rng);
        let f = fit_ar(&y, 3).unwrap();
        let tail = &y[3..];
        let m = tail.iter().sum::<f64>() / tail.len() as f64;
        let tss: f64 = tail.iter().map(|v| (v - m).powi(2)).sum();
        assert!(f.rss <= tss);
    }

    #[test]
    fn exogenous_lead_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gauss(60, &mut rng);
        let mut y = vec![0.0; 60];
        for t in 1..60 {
            y[t] = x[t - 1];
        }
        let f = fit_arx(&y, &x, 2).unwrap();
        assert!((f.coefficients[3] - 1.0).abs() < 1e-6, "{:?}", f.coefficients);
        assert!(f.rss < 1e-10);
        let zero = vec![0.0; 60];
        let with_zero = fit_arx(&y, &zero, 2).unwrap();
        let own = fit_ar(&y, 2).unwrap();
        assert!((with_zero.rss - own.rss).abs() < 1e-9);
    }

    #[test]
    fn lead_lag_gives_large_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gauss(60, &mut rng);
        let e = gauss(60, &mut rng);
        let y: Vec<f64> = (0..60).map(|t| if t > 0 { x[t - 1] } else { 0.0 } + 0.01 * e[t]).collect();
        let r = granger_f(&y, &x, &seg(0, 60), 1, DEFAULT_F_MAX).unwrap();
        assert!(r.f_statistic > 100.0, "{r:?}");
        assert_eq!((r.df1, r.df2), (1, 60 - 1 - 3));
    }

    #[test]
    fn independent_noise_has_nominal_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (len, q) = (60, 3);
        let mut below = 0;
        for _ in 0..500 {
            let x = gauss(len, &mut rng);
            let y = gauss(len, &mut rng);
            let r = granger_f(&y, &x, &seg(0, len), q, DEFAULT_F_MAX).unwrap();
            let crit = FisherSnedecor::new(r.df1 as f64, r.df2 as f64).unwrap().inverse_cdf(0.95);
            if r.f_statistic < crit {
                below += 1;
            }
        }
        assert!(below >= 450, "{below} of 500 below the 95% quantile");
    }

    #[test]
    fn identical_series_scores_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = gauss(40, &mut rng);
        let r = granger_f(&y, &y, &seg(0, 40), 3, DEFAULT_F_MAX).unwrap();
        assert!(r.f_statistic < 1e-6, "{r:?}");
    }

    #[test]
    fn perfect_fit_rules() {
        let y = vec![2.0; 30];
        let r = granger_f(&y, &y, &seg(0, 30), 3, DEFAULT_F_MAX).unwrap();
        assert_eq!(r.f_statistic, 0.0);
        // y copies x one step later; own lags cannot explain a random x
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = gauss(30, &mut rng);
        let y: Vec<f64> = (0..30).map(|t| if t > 0 { x[t - 1] } else { 0.0 }).collect();
        let r = granger_f(&y, &x, &seg(0, 30), 3, DEFAULT_F_MAX).unwrap();
        assert_eq!(r.f_statistic, DEFAULT_F_MAX);
    }

    #[test]
    fn short_segment_rejected() {
        let y = vec![0.0; 50];
        assert!(matches!(
            granger_f(&y, &y, &seg(10, 20), 3, DEFAULT_F_MAX),
            Err(KpiError::InsufficientData { needed: 11, actual: 10 })
        ));
        assert!(granger_f(&y, &y, &seg(45, 60), 3, DEFAULT_F_MAX).is_err());
        assert_eq!(max_granger_f(&y, &y, &[seg(10, 20)], 3, DEFAULT_F_MAX), None);
    }

    #[test]
    fn matches_normal_equation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let len = 20 + (rand::Rng::random_range(&mut rng, 0..40));
            let q = rand::Rng::random_range(&mut rng, 1..=4);
            let x = gauss(len, &mut rng);
            let noise = gauss(len, &mut rng);
            let y: Vec<f64> = (0..len).map(|t| if t > 0 { 0.6 * x[t - 1] } else { 0.0 } + noise[t]).collect();
            if len < 3 * q + 2 {
                continue;
            }
            let r = granger_f(&y, &x, &seg(0, len), q, DEFAULT_F_MAX).unwrap();
            let rr = oracle_rss(&y, None, q);
            let ru = oracle_rss(&y, Some(&x), q);
            let df2 = (len - q - 2 * q - 1) as f64;
            let f = ((rr - ru) / q as f64) / (ru / df2);
            assert!((r.f_statistic - f).abs() <= 1e-8 * f.abs().max(1.0), "{} vs {f}", r.f_statistic);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn nested_and_affine_invariant(
            seed in 0u64..10_000,
            a in 0.1f64..20.0,
            b in -50.0f64..50.0,
            c in 0.1f64..20.0,
            d in -50.0f64..50.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = gauss(48, &mut rng);
            let e = gauss(48, &mut rng);
            let y: Vec<f64> = (0..48).map(|t| if t > 1 { 0.4 * x[t - 2] } else { 0.0 } + e[t]).collect();
            let s = seg(4, 44);
            let r = granger_f(&y, &x, &s, 3, DEFAULT_F_MAX).unwrap();
            prop_assert!(r.unrestricted_rss <= r.restricted_rss + 1e-9);
            prop_assert!(r.f_statistic >= 0.0);
            let ya: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            let xa: Vec<f64> = x.iter().map(|v| c * v + d).collect();
            let r2 = granger_f(&ya, &xa, &s, 3, DEFAULT_F_MAX).unwrap();
            prop_assert!((r.f_statistic - r2.f_statistic).abs() <= 1e-6 * r.f_statistic.max(1e-3),
                "{} vs {}", r.f_statistic, r2.f_statistic);
        }
    }

    #[test]
    fn direction_of_lead() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut wins = 0;
        for trial in 0..200 {
            let delta = 1 + trial % 3;
            let x = gauss(80, &mut rng);
            let e = gauss(80, &mut rng);
            let y: Vec<f64> = (0..80).map(|t| if t >= delta { x[t - delta] } else { 0.0 } + 0.2 * e[t]).collect();
            let fwd = granger_f(&y, &x, &seg(0, 80), 3, DEFAULT_F_MAX).unwrap().f_statistic;
            let back = granger_f(&x, &y, &seg(0, 80), 3, DEFAULT_F_MAX).unwrap().f_statistic;
            if fwd > back {
                wins += 1;
            }
        }
        assert!(wins >= 190, "{wins} of 200");
    }
}
