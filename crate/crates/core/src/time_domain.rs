//! Time-domain metrics of an interval series.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::RnimSeries;

/// Histogram bin width for the triangular index (1/128 s).
pub const TRIANGULAR_BIN_MS: f64 = 1000.0 / 128.0;
/// Base successive-difference threshold; scaled by `n` for RR_nI_m series.
pub const NN50_BASE_MS: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TimeDomainError {
    #[error("series is empty")]
    EmptySeries,
}

/// Missing values are not computable for the series at hand.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeMetrics {
    pub avg_rr_ms: Option<f64>,
    pub sdrr_ms: Option<f64>,
    pub avg_hr_bpm: Option<f64>,
    pub sdhr_bpm: Option<f64>,
    pub rmssd_ms: Option<f64>,
    pub nn50x_count: Option<f64>,
    pub pnn50x_pct: Option<f64>,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
    pub triangular_index: Option<f64>,
}

impl TimeMetrics {
    pub fn values(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("avg_rr_ms", self.avg_rr_ms),
            ("sdrr_ms", self.sdrr_ms),
            ("avg_hr_bpm", self.avg_hr_bpm),
            ("sdhr_bpm", self.sdhr_bpm),
            ("rmssd_ms", self.rmssd_ms),
            ("nn50x_count", self.nn50x_count),
            ("pnn50x_pct", self.pnn50x_pct),
            ("skewness", self.skewness),
            ("kurtosis", self.kurtosis),
            ("triangular_index", self.triangular_index),
        ]
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (divisor `len − 1`); `None` below two values.
pub fn sample_std(x: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let mu = mean(x);
    let ss: f64 = x.iter().map(|v| (v - mu) * (v - mu)).sum();
    Some((ss / (x.len() - 1) as f64).sqrt())
}

pub fn compute_time_metrics(series: &RnimSeries) -> Result<TimeMetrics, TimeDomainError> {
    time_metrics(&series.values_ms, series.n)
}

/// Time-domain metrics of `values` (ms). The NN50 threshold is `n × 50` ms.
pub fn time_metrics(values: &[f64], n: usize) -> Result<TimeMetrics, TimeDomainError> {
    if values.is_empty() {
        return Err(TimeDomainError::EmptySeries);
    }
    let len = values.len();
    if len == 1 {
        // a lone interval has a mean and nothing else worth reporting
        return Ok(TimeMetrics {
            avg_rr_ms: Some(values[0]),
            ..TimeMetrics::default()
        });
    }
    let hr: Vec<f64> = values.iter().map(|v| 60_000.0 / v).collect();
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();

    let mut out = TimeMetrics {
        avg_rr_ms: Some(mean(values)),
        sdrr_ms: sample_std(values),
        avg_hr_bpm: Some(mean(&hr)),
        sdhr_bpm: sample_std(&hr),
        triangular_index: Some(triangular_index(values)),
        ..TimeMetrics::default()
    };

    if !diffs.is_empty() {
        let ss: f64 = diffs.iter().map(|d| d * d).sum();
        out.rmssd_ms = Some((ss / diffs.len() as f64).sqrt());
        let limit = n as f64 * NN50_BASE_MS;
        let count = diffs.iter().filter(|d| d.abs() > limit).count();
        out.nn50x_count = Some(count as f64);
        out.pnn50x_pct = Some(count as f64 / diffs.len() as f64 * 100.0);
    }

    let mu = mean(values);
    let (m2, m3, m4) = values.iter().fold((0.0, 0.0, 0.0), |(a, b, c), v| {
        let d = v - mu;
        let d2 = d * d;
        (a + d2, b + d2 * d, c + d2 * d2)
    });
    let (m2, m3, m4) = (m2 / len as f64, m3 / len as f64, m4 / len as f64);
    if m2 > 0.0 {
        out.skewness = Some(m3 / m2.powf(1.5));
        out.kurtosis = Some(m4 / (m2 * m2));
    }
    Ok(out)
}

/// Series length over the modal bin count of a 1/128 s histogram aligned at 0.
pub fn triangular_index(values: &[f64]) -> f64 {
    let mut bins: std::collections::HashMap<i64, usize> = std::collections::HashMap::new();
    for v in values {
        *bins.entry((v / TRIANGULAR_BIN_MS).floor() as i64).or_default() += 1;
    }
    let peak = bins.values().copied().max().unwrap_or(1);
    values.len() as f64 / peak as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_series() {
        let t = time_metrics(&[800.0; 10], 1).unwrap();
        assert_eq!(t.sdrr_ms, Some(0.0));
        assert_eq!(t.rmssd_ms, Some(0.0));
        assert_eq!(t.nn50x_count, Some(0.0));
        assert_eq!(t.pnn50x_pct, Some(0.0));
        assert_eq!(t.triangular_index, Some(1.0));
        assert_eq!(t.avg_hr_bpm, Some(75.0));
        assert_eq!(t.skewness, None);
    }

    #[test]
    fn hand_evaluated_example() {
        let t = time_metrics(&[800., 810., 790., 805.], 1).unwrap();
        assert_eq!(t.avg_rr_ms, Some(801.25));
        let expected = ((100.0 + 400.0 + 225.0) / 3.0f64).sqrt();
        assert!((t.rmssd_ms.unwrap() - expected).abs() < 1e-12);
        assert!((t.rmssd_ms.unwrap() - 15.546).abs() < 1e-3);
    }

    #[test]
    fn nn50_threshold_scales_with_n() {
        let v = [1600., 1690., 1810., 1720., 1740.];
        let t = time_metrics(&v, 2).unwrap();
        assert_eq!(t.nn50x_count, Some(1.0));
        assert_eq!(t.pnn50x_pct, Some(25.0));
        assert_eq!(time_metrics(&v, 1).unwrap().nn50x_count, Some(3.0));
    }

    #[test]
    fn single_value() {
        let t = time_metrics(&[900.0], 1).unwrap();
        assert_eq!(t.avg_rr_ms, Some(900.0));
        assert_eq!(t.sdrr_ms, None);
        assert_eq!(t.avg_hr_bpm, None);
        assert_eq!(t.triangular_index, None);
        assert_eq!(t.rmssd_ms, None);
        assert_eq!(t.pnn50x_pct, None);
        assert_eq!(time_metrics(&[], 1), Err(TimeDomainError::EmptySeries));
    }

    #[test]
    fn gaussian_like_moments() {
        // symmetric two-point distribution: skew 0, kurtosis 1
        let t = time_metrics(&[700., 900., 700., 900.], 1).unwrap();
        assert!(t.skewness.unwrap().abs() < 1e-12);
        assert!((t.kurtosis.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangular_bins_align_at_zero() {
        // 7.8125 ms bins: 0..7.8125 and 7.8125..15.625
        assert_eq!(triangular_index(&[1.0, 7.0, 8.0, 15.0]), 2.0);
        assert_eq!(triangular_index(&[800.0, 800.0, 900.0]), 1.5);
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    proptest! {
        #[test]
        fn scale_equivariance(v in proptest::collection::vec(300.0f64..2000.0, 3..100), c in 0.2f64..5.0) {
            let a = time_metrics(&v, 1).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let b = time_metrics(&scaled, 1).unwrap();
            prop_assert!(rel(b.avg_rr_ms.unwrap(), c * a.avg_rr_ms.unwrap()) < 1e-12);
            prop_assert!(rel(b.sdrr_ms.unwrap(), c * a.sdrr_ms.unwrap()) < 1e-9);
            prop_assert!(rel(b.rmssd_ms.unwrap(), c * a.rmssd_ms.unwrap()) < 1e-9);
            prop_assert!(rel(b.avg_hr_bpm.unwrap(), a.avg_hr_bpm.unwrap() / c) < 1e-12);
            if let (Some(sa), Some(sb)) = (a.skewness, b.skewness) {
                prop_assert!((sa - sb).abs() < 1e-7);
                prop_assert!(rel(b.kurtosis.unwrap(), a.kurtosis.unwrap()) < 1e-7);
            }
        }

        #[test]
        fn rmssd_identity_and_bounds(v in proptest::collection::vec(300.0f64..2000.0, 2..200), n in 1usize..5) {
            let t = time_metrics(&v, n).unwrap();
            let ss: f64 = v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
            let r = t.rmssd_ms.unwrap();
            prop_assert!(rel(r * r * (v.len() - 1) as f64, ss) < 1e-9 || ss == 0.0);
            let p = t.pnn50x_pct.unwrap();
            prop_assert!((0.0..=100.0).contains(&p));
            prop_assert!(t.sdrr_ms.unwrap() >= 0.0);
            prop_assert!(t.triangular_index.unwrap() >= 1.0);
        }

        #[test]
        fn permutation_invariance(v in proptest::collection::vec(300.0f64..2000.0, 3..100), seed in 0usize..1000) {
            let mut p = v.clone();
            let len = p.len();
            p.rotate_left(seed % len);
            p.swap(0, len - 1);
            let a = time_metrics(&v, 1).unwrap();
            let b = time_metrics(&p, 1).unwrap();
            prop_assert!(rel(b.avg_rr_ms.unwrap(), a.avg_rr_ms.unwrap()) < 1e-12);
            prop_assert!(rel(b.sdrr_ms.unwrap(), a.sdrr_ms.unwrap()) < 1e-9);
            prop_assert_eq!(b.triangular_index, a.triangular_index);
            if let (Some(sa), Some(sb)) = (a.skewness, b.skewness) {
                prop_assert!((sa - sb).abs() < 1e-7);
                prop_assert!(rel(b.kurtosis.unwrap(), a.kurtosis.unwrap()) < 1e-9);
            }
        }
    }
}
