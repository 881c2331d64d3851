//! Poincaré descriptors, approximate and sample entropy, and detrended
//! fluctuation analysis.
//!
//! Entropy template distances use the Chebyshev (max) norm. Match counting is
//! done in integers, so results depend only on which template pairs fall
//! within the tolerance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::RnimSeries;
use crate::time_domain::{mean, sample_std};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonlinearError {
    #[error("series of length {got} is too short; need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("no template matches (A = {a}, B = {b}); sample entropy is undefined")]
    NoMatches { a: u64, b: u64 },
    #[error("fluctuation function vanished at box size {0}")]
    DegenerateFluctuation(usize),
    #[error("box-size range {lo}..={hi} has fewer than two sizes")]
    EmptyRange { lo: usize, hi: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropyConfig {
    /// Template length (embedding dimension).
    pub embedding: usize,
    /// Tolerance as a multiple of the series' sample standard deviation.
    pub tolerance_factor: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            embedding: 2,
            tolerance_factor: 0.15,
        }
    }
}

impl EntropyConfig {
    pub fn validate(&self) -> Result<(), NonlinearError> {
        if self.embedding < 1 || !(self.tolerance_factor > 0.0) {
            return Err(NonlinearError::InvalidConfig(format!(
                "embedding must be ≥ 1 and tolerance factor > 0, got {} and {}",
                self.embedding, self.tolerance_factor
            )));
        }
        Ok(())
    }

    /// Absolute tolerance for `values`.
    pub fn tolerance(&self, values: &[f64]) -> f64 {
        self.tolerance_factor * sample_std(values).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DfaConfig {
    pub alpha1_min: usize,
    pub alpha1_max: usize,
    pub alpha2_min: usize,
    /// Upper box size for α2, further capped at a quarter of the series length.
    pub alpha2_max: usize,
}

impl Default for DfaConfig {
    fn default() -> Self {
        Self {
            alpha1_min: 4,
            alpha1_max: 16,
            alpha2_min: 16,
            alpha2_max: 64,
        }
    }
}

pub const MIN_ALPHA1_LEN: usize = 20;
pub const MIN_ALPHA2_LEN: usize = 64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NonlinearMetrics {
    pub sd1_ms: Option<f64>,
    pub sd2_ms: Option<f64>,
    pub apen: Option<f64>,
    pub sampen: Option<f64>,
    pub dfa_alpha1: Option<f64>,
    pub dfa_alpha2: Option<f64>,
}

impl NonlinearMetrics {
    pub fn values(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("sd1_ms", self.sd1_ms),
            ("sd2_ms", self.sd2_ms),
            ("apen", self.apen),
            ("sampen", self.sampen),
            ("dfa_alpha1", self.dfa_alpha1),
            ("dfa_alpha2", self.dfa_alpha2),
        ]
    }
}

/// SD1 and SD2 of the lag-1 return map.
pub fn poincare(values: &[f64]) -> Result<(f64, f64), NonlinearError> {
    if values.len() < 3 {
        return Err(NonlinearError::TooShort {
            got: values.len(),
            need: 3,
        });
    }
    let r2 = std::f64::consts::SQRT_2;
    let across: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) / r2).collect();
    let along: Vec<f64> = values.windows(2).map(|w| (w[1] + w[0]) / r2).collect();
    Ok((
        sample_std(&across).unwrap_or(0.0),
        sample_std(&along).unwrap_or(0.0),
    ))
}

fn within(x: &[f64], i: usize, j: usize, len: usize, r: f64) -> bool {
    (0..len).all(|k| (x[i + k] - x[j + k]).abs() <= r)
}

fn check_entropy_len(len: usize, embedding: usize) -> Result<(), NonlinearError> {
    if len <= embedding + 1 {
        return Err(NonlinearError::TooShort {
            got: len,
            need: embedding + 2,
        });
    }
    Ok(())
}

/// Approximate entropy with an explicit tolerance `r`.
pub fn apen_with_tolerance(x: &[f64], embedding: usize, r: f64) -> Result<f64, NonlinearError> {
    check_entropy_len(x.len(), embedding)?;
    let len = x.len();
    let phi = |k: usize| -> f64 {
        let templates = len - k + 1;
        let mut acc = 0.0;
        for i in 0..templates {
            let count = (0..templates).filter(|&j| within(x, i, j, k, r)).count();
            acc += (count as f64 / templates as f64).ln();
        }
        acc / templates as f64
    };
    Ok(phi(embedding) - phi(embedding + 1))
}

/// Approximate entropy; tolerance is `tolerance_factor × SDRR`.
pub fn apen(values: &[f64], cfg: &EntropyConfig) -> Result<f64, NonlinearError> {
    cfg.validate()?;
    apen_with_tolerance(values, cfg.embedding, cfg.tolerance(values))
}

/// Counts (A, B) of template pairs `i < j` among the first `len − m`
/// templates matching at lengths `m + 1` and `m`.
pub fn sampen_counts(x: &[f64], embedding: usize, r: f64) -> (u64, u64) {
    let templates = x.len() - embedding;
    let (mut a, mut b) = (0u64, 0u64);
    for i in 0..templates {
        for j in i + 1..templates {
            if within(x, i, j, embedding, r) {
                b += 1;
                if (x[i + embedding] - x[j + embedding]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    (a, b)
}

/// Sample entropy with an explicit tolerance `r`.
pub fn sampen_with_tolerance(x: &[f64], embedding: usize, r: f64) -> Result<f64, NonlinearError> {
    check_entropy_len(x.len(), embedding)?;
    let (a, b) = sampen_counts(x, embedding, r);
    if a == 0 || b == 0 {
        return Err(NonlinearError::NoMatches { a, b });
    }
    Ok(-(a as f64 / b as f64).ln())
}

pub fn sampen(values: &[f64], cfg: &EntropyConfig) -> Result<f64, NonlinearError> {
    cfg.validate()?;
    sampen_with_tolerance(values, cfg.embedding, cfg.tolerance(values))
}

/// Fluctuation function F(s): RMS residual of per-box linear fits to the
/// profile, over the complete boxes counted from the left.
pub fn fluctuation(profile: &[f64], size: usize) -> f64 {
    let boxes = profile.len() / size;
    // abscissae 0..size are shared by every box
    let xm = (size as f64 - 1.0) / 2.0;
    let sxx: f64 = (0..size).map(|k| (k as f64 - xm).powi(2)).sum();
    let mut ss = 0.0;
    for b in 0..boxes {
        let seg = &profile[b * size..(b + 1) * size];
        let ym = mean(seg);
        let sxy: f64 = seg.iter().enumerate().map(|(k, y)| (k as f64 - xm) * (y - ym)).sum();
        let slope = sxy / sxx;
        ss += seg
            .iter()
            .enumerate()
            .map(|(k, y)| {
                let r = y - ym - slope * (k as f64 - xm);
                r * r
            })
            .sum::<f64>();
    }
    (ss / (boxes * size) as f64).sqrt()
}

/// Least-squares slope of log F(s) against log s over `lo..=hi`.
pub fn dfa_exponent(values: &[f64], lo: usize, hi: usize) -> Result<f64, NonlinearError> {
    if hi <= lo || lo < 2 {
        return Err(NonlinearError::EmptyRange { lo, hi });
    }
    if values.len() < hi {
        return Err(NonlinearError::TooShort {
            got: values.len(),
            need: hi,
        });
    }
    let mu = mean(values);
    let mut acc = 0.0;
    let profile: Vec<f64> = values
        .iter()
        .map(|v| {
            acc += v - mu;
            acc
        })
        .collect();
    let mut pts = Vec::with_capacity(hi - lo + 1);
    for s in lo..=hi {
        let f = fluctuation(&profile, s);
        if !(f > 0.0) {
            return Err(NonlinearError::DegenerateFluctuation(s));
        }
        pts.push(((s as f64).ln(), f.ln()));
    }
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - xm) * (x - xm)).sum();
    Ok(sxy / sxx)
}

/// Short- and long-range DFA exponents. Each is `Err` when its length gate
/// or box range is not met.
pub fn dfa(
    values: &[f64],
    cfg: &DfaConfig,
) -> (Result<f64, NonlinearError>, Result<f64, NonlinearError>) {
    let len = values.len();
    let alpha1 = if len < MIN_ALPHA1_LEN {
        Err(NonlinearError::TooShort {
            got: len,
            need: MIN_ALPHA1_LEN,
        })
    } else {
        dfa_exponent(values, cfg.alpha1_min, cfg.alpha1_max)
    };
    let alpha2 = if len < MIN_ALPHA2_LEN {
        Err(NonlinearError::TooShort {
            got: len,
            need: MIN_ALPHA2_LEN,
        })
    } else {
        dfa_exponent(values, cfg.alpha2_min, cfg.alpha2_max.min(len / 4))
    };
    (alpha1, alpha2)
}

/// All nonlinear metrics for a series; failures become `None`.
pub fn compute_nonlinear_metrics(
    series: &RnimSeries,
    entropy: &EntropyConfig,
    dfa_cfg: &DfaConfig,
) -> NonlinearMetrics {
    nonlinear_metrics(&series.values_ms, entropy, dfa_cfg)
}

pub fn nonlinear_metrics(values: &[f64], entropy: &EntropyConfig, dfa_cfg: &DfaConfig) -> NonlinearMetrics {
    let (sd1, sd2) = poincare(values).ok().unzip();
    let (a1, a2) = dfa(values, dfa_cfg);
    NonlinearMetrics {
        sd1_ms: sd1,
        sd2_ms: sd2,
        apen: apen(values, entropy).ok(),
        sampen: sampen(values, entropy).ok(),
        dfa_alpha1: a1.ok(),
        dfa_alpha2: a2.ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gaussian_noise;
    use proptest::prelude::*;

    /// Definitional ApEn: separate counting pass per template length.
    fn apen_oracle(x: &[f64], m: usize, r: f64) -> f64 {
        let mut phis = [0.0; 2];
        for (slot, k) in [m, m + 1].into_iter().enumerate() {
            let n = x.len() - k + 1;
            let mut sum = 0.0;
            for i in 0..n {
                let mut c = 0usize;
                for j in 0..n {
                    let mut d: f64 = 0.0;
                    for l in 0..k {
                        d = d.max((x[i + l] - x[j + l]).abs());
                    }
                    if d <= r {
                        c += 1;
                    }
                }
                sum += (c as f64 / n as f64).ln();
            }
            phis[slot] = sum / n as f64;
        }
        phis[0] - phis[1]
    }

    fn sampen_oracle(x: &[f64], m: usize, r: f64) -> Option<f64> {
        let n = x.len() - m;
        let dist = |i: usize, j: usize, k: usize| (0..k).map(|l| (x[i + l] - x[j + l]).abs()).fold(0.0, f64::max);
        let (mut a, mut b) = (0u64, 0u64);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if dist(i, j, m) <= r {
                    b += 1;
                }
                if dist(i, j, m + 1) <= r {
                    a += 1;
                }
            }
        }
        (a > 0 && b > 0).then(|| -(a as f64 / b as f64).ln())
    }

    #[test]
    fn poincare_constant_and_alternating() {
        assert_eq!(poincare(&[800.0; 10]).unwrap(), (0.0, 0.0));
        let alt: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 800.0 } else { 900.0 }).collect();
        let (sd1, sd2) = poincare(&alt).unwrap();
        assert!(sd1 > 0.0);
        assert!(sd2.abs() < 1e-9);
        assert!(poincare(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn entropies_of_constant_series() {
        let x = [700.0; 30];
        // tolerance 0 still matches identical templates
        assert_eq!(apen(&x, &EntropyConfig::default()).unwrap(), 0.0);
        assert_eq!(sampen_with_tolerance(&x, 2, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn apen_small_alternating_example() {
        let x = [1., 2., 1., 2., 1., 2., 1., 2., 1., 2.];
        let cfg = EntropyConfig::default();
        let r = cfg.tolerance(&x);
        let got = apen(&x, &cfg).unwrap();
        assert_eq!(got.to_bits(), apen_oracle(&x, 2, r).to_bits());
    }

    #[test]
    fn sampen_monotone_is_not_computable() {
        let x: Vec<f64> = (0..20).map(|i| 700.0 + 10.0 * i as f64).collect();
        assert!(matches!(
            sampen(&x, &EntropyConfig::default()),
            Err(NonlinearError::NoMatches { b: 0, .. })
        ));
    }

    #[test]
    fn entropy_length_gate() {
        assert!(matches!(apen(&[1.0, 2.0, 3.0], &EntropyConfig::default()), Err(NonlinearError::TooShort { .. })));
        assert!(matches!(sampen(&[1.0, 2.0, 3.0], &EntropyConfig::default()), Err(NonlinearError::TooShort { .. })));
    }

    #[test]
    fn uniform_noise_matches_oracles() {
        let x: Vec<f64> = gaussian_noise(300, 4).iter().map(|v| 800.0 + 40.0 * v).collect();
        let cfg = EntropyConfig::default();
        let r = cfg.tolerance(&x);
        assert_eq!(apen(&x, &cfg).unwrap().to_bits(), apen_oracle(&x, 2, r).to_bits());
        assert_eq!(sampen(&x, &cfg).ok().map(f64::to_bits), sampen_oracle(&x, 2, r).map(f64::to_bits));
    }

    #[test]
    fn dfa_gates() {
        let short: Vec<f64> = gaussian_noise(40, 1);
        let (a1, a2) = dfa(&short, &DfaConfig::default());
        assert!(a1.is_ok());
        assert!(matches!(a2, Err(NonlinearError::TooShort { .. })));
        let tiny = gaussian_noise(15, 1);
        assert!(dfa(&tiny, &DfaConfig::default()).0.is_err());
        // 64 values cap α2 at a single box size
        let edge = gaussian_noise(64, 2);
        assert!(matches!(dfa(&edge, &DfaConfig::default()).1, Err(NonlinearError::EmptyRange { .. })));
        assert!(dfa(&gaussian_noise(68, 2), &DfaConfig::default()).1.is_ok());
    }

    #[test]
    fn dfa_white_noise_near_half() {
        let x = gaussian_noise(2000, 7);
        let a1 = dfa(&x, &DfaConfig::default()).0.unwrap();
        assert!((0.3..0.7).contains(&a1), "{a1}");
    }

    #[test]
    fn fluctuation_of_linear_profile_is_zero() {
        let profile: Vec<f64> = (0..64).map(|i| 3.0 * i as f64 - 2.0).collect();
        assert!(fluctuation(&profile, 8) < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn entropies_equal_oracles(v in proptest::collection::vec(500.0f64..1200.0, 5..120), m in 1usize..3) {
            let cfg = EntropyConfig { embedding: m, tolerance_factor: 0.2 };
            let r = cfg.tolerance(&v);
            prop_assert_eq!(apen(&v, &cfg).unwrap().to_bits(), apen_oracle(&v, m, r).to_bits());
            prop_assert_eq!(sampen(&v, &cfg).ok().map(f64::to_bits), sampen_oracle(&v, m, r).map(f64::to_bits));
        }

        #[test]
        fn entropies_shift_and_scale_invariant(v in proptest::collection::vec(500i32..1200, 10..120), shift in -400i32..400, c in 1u32..8) {
            let x: Vec<f64> = v.iter().map(|&a| a as f64).collect();
            let shifted: Vec<f64> = v.iter().map(|&a| (a + shift) as f64).collect();
            let scaled: Vec<f64> = v.iter().map(|&a| a as f64 * c as f64).collect();
            let cfg = EntropyConfig::default();
            prop_assert_eq!(apen(&x, &cfg).ok(), apen(&shifted, &cfg).ok());
            prop_assert_eq!(sampen(&x, &cfg).ok(), sampen(&shifted, &cfg).ok());
            if let (Ok(a), Ok(b)) = (apen(&x, &cfg), apen(&scaled, &cfg)) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            }
            if let (Ok(a), Ok(b)) = (sampen(&x, &cfg), sampen(&scaled, &cfg)) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            }
        }

        #[test]
        fn poincare_identities(v in proptest::collection::vec(300.0f64..2000.0, 3..300)) {
            let (sd1, sd2) = poincare(&v).unwrap();
            let d: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
            let s: Vec<f64> = v.windows(2).map(|w| w[1] + w[0]).collect();
            let var = |x: &[f64]| { let m = x.iter().sum::<f64>() / x.len() as f64; x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64 };
            let vd = var(&d);
            prop_assert!((sd1 * sd1 - 0.5 * vd).abs() <= 1e-9 * vd.max(1e-12));
            let vs = var(&s);
            prop_assert!((sd2 * sd2 - 0.5 * vs).abs() <= 1e-9 * vs.max(1e-12));
        }

        #[test]
        fn dfa_affine_invariant(seed in 0u64..500, a in 0.1f64..10.0, b in -1000.0f64..1000.0) {
            let x = gaussian_noise(300, seed);
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let (x1, x2) = dfa(&x, &DfaConfig::default());
            let (y1, y2) = dfa(&y, &DfaConfig::default());
            prop_assert!((x1.unwrap() - y1.unwrap()).abs() < 1e-9);
            prop_assert!((x2.unwrap() - y2.unwrap()).abs() < 1e-9);
        }
    }
}
