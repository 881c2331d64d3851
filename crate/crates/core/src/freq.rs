//! Power spectral density of interval series and band metrics.
//!
//! Four estimators are provided. Lomb–Scargle works directly on the uneven
//! (time, value) pairs; Welch, FFT and Burg first resample the tachogram onto
//! an even grid with a cubic spline. All estimators report one-sided densities
//! in ms²/Hz whose integral approximates the series variance: the even-grid
//! methods by Parseval, Lomb–Scargle by explicit rescaling.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::{InterpKind, Interpolant};
use crate::model::RnimSeries;

pub const MIN_INTERVALS: usize = 4;
pub const WELCH_SEGMENT: usize = 256;
pub const MIN_WELCH_SAMPLES: usize = 64;
pub const MIN_FFT_SAMPLES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreqError {
    #[error("need at least {MIN_INTERVALS} intervals for spectral analysis, got {0}")]
    TooFewIntervals(usize),
    #[error("resampled tachogram has {got} samples; {method} needs at least {need}")]
    TooShort {
        method: PsdMethod,
        got: usize,
        need: usize,
    },
    #[error("Burg order {order} needs more than {order} samples, got {got}")]
    BurgOrderTooHigh { order: usize, got: usize },
    #[error("invalid frequency configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PsdMethod {
    #[default]
    Lomb,
    Welch,
    Fft,
    Burg,
}

impl fmt::Display for PsdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PsdMethod::Lomb => "lomb",
            PsdMethod::Welch => "welch",
            PsdMethod::Fft => "fft",
            PsdMethod::Burg => "burg",
        })
    }
}

impl FromStr for PsdMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lomb" | "lomb-scargle" => Ok(PsdMethod::Lomb),
            "welch" => Ok(PsdMethod::Welch),
            "fft" => Ok(PsdMethod::Fft),
            "burg" => Ok(PsdMethod::Burg),
            other => Err(format!("unknown PSD method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FreqConfig {
    pub method: PsdMethod,
    pub vlf: Band,
    pub lf: Band,
    pub hf: Band,
    pub resample_hz: f64,
    pub burg_order: usize,
    pub oversample: f64,
}

impl Default for FreqConfig {
    fn default() -> Self {
        Self {
            method: PsdMethod::Lomb,
            vlf: Band::new(0.0, 0.04),
            lf: Band::new(0.04, 0.15),
            hf: Band::new(0.15, 0.4),
            resample_hz: 4.0,
            burg_order: 16,
            oversample: 4.0,
        }
    }
}

impl FreqConfig {
    pub fn validate(&self) -> Result<(), FreqError> {
        let edges = [
            self.vlf.lo,
            self.vlf.hi,
            self.lf.lo,
            self.lf.hi,
            self.hf.lo,
            self.hf.hi,
        ];
        let ordered = edges[0] >= 0.0
            && self.vlf.lo < self.vlf.hi
            && self.vlf.hi <= self.lf.lo
            && self.lf.lo < self.lf.hi
            && self.lf.hi <= self.hf.lo
            && self.hf.lo < self.hf.hi;
        if !ordered || edges.iter().any(|e| !e.is_finite()) {
            return Err(FreqError::InvalidConfig(format!(
                "band edges must satisfy 0 ≤ vlf.lo < vlf.hi ≤ lf.lo < lf.hi ≤ hf.lo < hf.hi, got {edges:?}"
            )));
        }
        if !(self.resample_hz > 2.0 * self.hf.hi) {
            return Err(FreqError::InvalidConfig(format!(
                "resample rate {} Hz must exceed twice the HF upper edge",
                self.resample_hz
            )));
        }
        if self.burg_order == 0 {
            return Err(FreqError::InvalidConfig("Burg order must be positive".into()));
        }
        if !(self.oversample >= 1.0) {
            return Err(FreqError::InvalidConfig("oversample must be at least 1".into()));
        }
        Ok(())
    }
}

/// One-sided PSD on an ascending, evenly spaced grid that excludes DC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
    pub method: PsdMethod,
}

impl PsdEstimate {
    pub fn resolution(&self) -> f64 {
        match self.freqs_hz.as_slice() {
            [f] => *f,
            [f0, f1, ..] => f1 - f0,
            [] => 0.0,
        }
    }

    /// Rectangle-rule integral of the whole estimate.
    pub fn integrated_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution()
    }

    pub fn peak_frequency(&self) -> Option<f64> {
        self.power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| self.freqs_hz[i])
    }

    /// Integral of the piecewise-linear interpolant over `[lo, hi]`. Below the
    /// first grid point and above the last, the end values are held constant.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let (f, p) = (&self.freqs_hz, &self.power);
        if f.is_empty() || hi <= lo {
            return 0.0;
        }
        let mut total = 0.0;
        // nodes: (0, p[0]) then the grid
        let node = |j: usize| -> (f64, f64) {
            if j == 0 {
                (0.0_f64.min(f[0]), p[0])
            } else {
                (f[j - 1], p[j - 1])
            }
        };
        for j in 0..f.len() {
            let (x0, y0) = node(j);
            let (x1, y1) = node(j + 1);
            let a = lo.max(x0);
            let b = hi.min(x1);
            if b <= a {
                continue;
            }
            let at = |x: f64| y0 + (y1 - y0) * (x - x0) / (x1 - x0);
            total += (b - a) * (at(a) + at(b)) / 2.0;
        }
        let last = *f.last().unwrap();
        if hi > last {
            total += (hi - lo.max(last)) * p[p.len() - 1];
        }
        total
    }
}

fn sample_variance(x: &[f64]) -> f64 {
    crate::time_domain::sample_std(x).map_or(0.0, |s| s * s)
}

/// Lomb–Scargle periodogram of the mean-centred series on `f_k = k·Δf`,
/// `Δf = 1/(oversample·T)`, up to the HF upper edge, rescaled so that
/// `Σ power·Δf` equals the sample variance.
pub fn lomb_psd(times_ms: &[f64], values_ms: &[f64], cfg: &FreqConfig) -> Result<PsdEstimate, FreqError> {
    if values_ms.len() < MIN_INTERVALS {
        return Err(FreqError::TooFewIntervals(values_ms.len()));
    }
    let t0 = times_ms[0];
    let t: Vec<f64> = times_ms.iter().map(|v| (v - t0) / 1000.0).collect();
    let span = t[t.len() - 1];
    let mu = crate::time_domain::mean(values_ms);
    let y: Vec<f64> = values_ms.iter().map(|v| v - mu).collect();

    let df = 1.0 / (cfg.oversample * span);
    let count = (cfg.hf.hi / df).ceil() as usize;
    let freqs: Vec<f64> = (1..=count).map(|k| k as f64 * df).collect();
    let mut power: Vec<f64> = freqs
        .iter()
        .map(|&f| {
            let w = 2.0 * PI * f;
            let (s2, c2) = t.iter().fold((0.0, 0.0), |(s, c), &ti| {
                let (sn, cs) = (2.0 * w * ti).sin_cos();
                (s + sn, c + cs)
            });
            let tau = s2.atan2(c2) / (2.0 * w);
            let (mut yc, mut ys, mut cc, mut ss) = (0.0, 0.0, 0.0, 0.0);
            for (ti, yi) in t.iter().zip(&y) {
                let (sn, cs) = (w * (ti - tau)).sin_cos();
                yc += yi * cs;
                ys += yi * sn;
                cc += cs * cs;
                ss += sn * sn;
            }
            let mut p = 0.0;
            if cc > 0.0 {
                p += yc * yc / cc;
            }
            if ss > 0.0 {
                p += ys * ys / ss;
            }
            0.5 * p
        })
        .collect();

    let raw: f64 = power.iter().sum::<f64>() * df;
    let var = sample_variance(values_ms);
    let scale = if raw > 0.0 { var / raw } else { 0.0 };
    power.iter_mut().for_each(|p| *p *= scale);
    Ok(PsdEstimate {
        freqs_hz: freqs,
        power,
        method: PsdMethod::Lomb,
    })
}

/// Evenly resampled, mean-removed tachogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Tachogram {
    pub rate_hz: f64,
    pub values: Vec<f64>,
}

/// Cubic-spline resampling of `(time, value)` at `rate_hz` over
/// `[first, last]` time, with the mean removed.
pub fn resample_even(times_ms: &[f64], values_ms: &[f64], rate_hz: f64) -> Result<Tachogram, FreqError> {
    if values_ms.len() < MIN_INTERVALS {
        return Err(FreqError::TooFewIntervals(values_ms.len()));
    }
    let t: Vec<f64> = times_ms.iter().map(|v| v / 1000.0).collect();
    let spline = Interpolant::new(InterpKind::Spline, &t, values_ms)
        .map_err(|e| FreqError::InvalidConfig(format!("time axis: {e}")))?;
    let (start, end) = (t[0], t[t.len() - 1]);
    let count = ((end - start) * rate_hz + 1e-9).floor() as usize + 1;
    let mut values: Vec<f64> = (0..count)
        .map(|k| spline.eval(start + k as f64 / rate_hz))
        .collect();
    let mu = crate::time_domain::mean(&values);
    values.iter_mut().for_each(|v| *v -= mu);
    Ok(Tachogram { rate_hz, values })
}

fn remove_mean(x: &[f64]) -> Vec<f64> {
    let mu = crate::time_domain::mean(x);
    x.iter().map(|v| v - mu).collect()
}

/// Folds a full-length spectrum into a one-sided density on `k·fs/N`, `k ≥ 1`.
fn one_sided(spectrum_sq: &[f64], fs: f64, norm: f64) -> (Vec<f64>, Vec<f64>) {
    let n = spectrum_sq.len();
    let half = n / 2;
    let mut freqs = Vec::with_capacity(half);
    let mut power = Vec::with_capacity(half);
    for (k, s) in spectrum_sq.iter().enumerate().take(half + 1).skip(1) {
        let doubled = if n.is_multiple_of(2) && k == half { 1.0 } else { 2.0 };
        freqs.push(k as f64 * fs / n as f64);
        power.push(doubled * s / norm);
    }
    (freqs, power)
}

fn power_spectrum(x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(buf.len()).process(&mut buf);
    buf.iter().map(|c| c.norm_sqr()).collect()
}

/// Single full-length periodogram.
pub fn fft_psd(tach: &Tachogram) -> Result<PsdEstimate, FreqError> {
    let n = tach.values.len();
    if n < MIN_FFT_SAMPLES {
        return Err(FreqError::TooShort {
            method: PsdMethod::Fft,
            got: n,
            need: MIN_FFT_SAMPLES,
        });
    }
    let y = remove_mean(&tach.values);
    let spec = power_spectrum(&y, &mut FftPlanner::new());
    let (freqs_hz, power) = one_sided(&spec, tach.rate_hz, tach.rate_hz * n as f64);
    Ok(PsdEstimate {
        freqs_hz,
        power,
        method: PsdMethod::Fft,
    })
}

/// Averaged Hamming-windowed periodograms over half-overlapping segments of
/// `min(256, len)` samples.
pub fn welch_psd(tach: &Tachogram) -> Result<PsdEstimate, FreqError> {
    let n = tach.values.len();
    if n < MIN_WELCH_SAMPLES {
        return Err(FreqError::TooShort {
            method: PsdMethod::Welch,
            got: n,
            need: MIN_WELCH_SAMPLES,
        });
    }
    let seg = WELCH_SEGMENT.min(n);
    let step = seg / 2;
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (seg - 1) as f64).cos())
        .collect();
    let energy: f64 = window.iter().map(|w| w * w).sum();
    let mut planner = FftPlanner::new();
    let mut acc = vec![0.0; seg];
    let mut segments = 0usize;
    let mut start = 0;
    while start + seg <= n {
        let piece = remove_mean(&tach.values[start..start + seg]);
        let windowed: Vec<f64> = piece.iter().zip(&window).map(|(v, w)| v * w).collect();
        for (a, s) in acc.iter_mut().zip(power_spectrum(&windowed, &mut planner)) {
            *a += s;
        }
        segments += 1;
        start += step;
    }
    acc.iter_mut().for_each(|a| *a /= segments as f64);
    let (freqs_hz, power) = one_sided(&acc, tach.rate_hz, tach.rate_hz * energy);
    Ok(PsdEstimate {
        freqs_hz,
        power,
        method: PsdMethod::Welch,
    })
}

/// Burg estimate of AR coefficients `a` (with `a[0] = 1`) and the final
/// prediction-error power.
pub fn burg_ar(x: &[f64], order: usize) -> Result<(Vec<f64>, f64), FreqError> {
    let n = x.len();
    if n <= order {
        return Err(FreqError::BurgOrderTooHigh { order, got: n });
    }
    let mut f = x.to_vec();
    let mut b = x.to_vec();
    let mut a = vec![1.0];
    let mut err = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    for p in 1..=order {
        let (mut num, mut den) = (0.0, 0.0);
        for i in p..n {
            num += f[i] * b[i - 1];
            den += f[i] * f[i] + b[i - 1] * b[i - 1];
        }
        let k = if den > 0.0 { -2.0 * num / den } else { 0.0 };
        for i in (p..n).rev() {
            let fi = f[i];
            f[i] = fi + k * b[i - 1];
            b[i] = b[i - 1] + k * fi;
        }
        a.push(0.0);
        let prev = a.clone();
        for i in 1..=p {
            a[i] = prev[i] + k * prev[p - i];
        }
        err *= 1.0 - k * k;
    }
    Ok((a, err))
}

/// Autoregressive spectrum of order `order` on the FFT grid.
pub fn burg_psd(tach: &Tachogram, order: usize) -> Result<PsdEstimate, FreqError> {
    let y = remove_mean(&tach.values);
    let (a, err) = burg_ar(&y, order)?;
    let n = y.len();
    let fs = tach.rate_hz;
    let spectrum: Vec<f64> = (0..n)
        .map(|k| {
            let w = 2.0 * PI * k as f64 / n as f64;
            let z = a.iter().enumerate().fold(Complex::new(0.0, 0.0), |acc, (i, c)| {
                acc + Complex::from_polar(*c, -w * i as f64)
            });
            err / z.norm_sqr()
        })
        .collect();
    // `one_sided` divides by fs·N; the AR density is already per-sample
    let (freqs_hz, power) = one_sided(&spectrum, fs, fs);
    Ok(PsdEstimate {
        freqs_hz,
        power,
        method: PsdMethod::Burg,
    })
}

/// Estimates the PSD with the configured method.
pub fn estimate_psd(times_ms: &[f64], values_ms: &[f64], cfg: &FreqConfig) -> Result<PsdEstimate, FreqError> {
    cfg.validate()?;
    if cfg.method == PsdMethod::Lomb {
        return lomb_psd(times_ms, values_ms, cfg);
    }
    let tach = resample_even(times_ms, values_ms, cfg.resample_hz)?;
    match cfg.method {
        PsdMethod::Welch => welch_psd(&tach),
        PsdMethod::Fft => fft_psd(&tach),
        PsdMethod::Burg => burg_psd(&tach, cfg.burg_order),
        PsdMethod::Lomb => unreachable!(),
    }
}

pub fn series_psd(series: &RnimSeries, cfg: &FreqConfig) -> Result<PsdEstimate, FreqError> {
    estimate_psd(&series.times_ms, &series.values_ms, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqMetrics {
    pub method: PsdMethod,
    pub vlf: Band,
    pub lf: Band,
    pub hf: Band,
    pub vlf_peak_hz: Option<f64>,
    pub lf_peak_hz: Option<f64>,
    pub hf_peak_hz: Option<f64>,
    pub vlf_power_ms2: Option<f64>,
    pub lf_power_ms2: Option<f64>,
    pub hf_power_ms2: Option<f64>,
    pub vlf_pct: Option<f64>,
    pub lf_pct: Option<f64>,
    pub hf_pct: Option<f64>,
    pub lf_nu: Option<f64>,
    pub hf_nu: Option<f64>,
    pub total_power_ms2: Option<f64>,
    pub lf_hf_ratio: Option<f64>,
}

impl FreqMetrics {
    /// All values not computable.
    pub fn empty(cfg: &FreqConfig) -> Self {
        Self {
            method: cfg.method,
            vlf: cfg.vlf,
            lf: cfg.lf,
            hf: cfg.hf,
            vlf_peak_hz: None,
            lf_peak_hz: None,
            hf_peak_hz: None,
            vlf_power_ms2: None,
            lf_power_ms2: None,
            hf_power_ms2: None,
            vlf_pct: None,
            lf_pct: None,
            hf_pct: None,
            lf_nu: None,
            hf_nu: None,
            total_power_ms2: None,
            lf_hf_ratio: None,
        }
    }

    pub fn values(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("vlf_peak_hz", self.vlf_peak_hz),
            ("lf_peak_hz", self.lf_peak_hz),
            ("hf_peak_hz", self.hf_peak_hz),
            ("vlf_power_ms2", self.vlf_power_ms2),
            ("lf_power_ms2", self.lf_power_ms2),
            ("hf_power_ms2", self.hf_power_ms2),
            ("vlf_pct", self.vlf_pct),
            ("lf_pct", self.lf_pct),
            ("hf_pct", self.hf_pct),
            ("lf_nu", self.lf_nu),
            ("hf_nu", self.hf_nu),
            ("total_power_ms2", self.total_power_ms2),
            ("lf_hf_ratio", self.lf_hf_ratio),
        ]
    }
}

fn band_peak(psd: &PsdEstimate, band: Band) -> Option<f64> {
    psd.freqs_hz
        .iter()
        .zip(&psd.power)
        .filter(|(f, _)| **f > band.lo && **f <= band.hi)
        .fold(None, |best: Option<(f64, f64)>, (&f, &p)| match best {
            Some((_, bp)) if bp >= p => best,
            _ => Some((f, p)),
        })
        .map(|(f, _)| f)
}

/// Band powers, peaks, percentages and normalised units.
pub fn band_metrics(psd: &PsdEstimate, cfg: &FreqConfig) -> FreqMetrics {
    let mut out = FreqMetrics::empty(cfg);
    out.method = psd.method;
    let vlf = psd.integrate(cfg.vlf.lo, cfg.vlf.hi);
    let lf = psd.integrate(cfg.lf.lo, cfg.lf.hi);
    let hf = psd.integrate(cfg.hf.lo, cfg.hf.hi);
    let total = psd.integrate(cfg.vlf.lo, cfg.hf.hi);
    out.vlf_power_ms2 = Some(vlf);
    out.lf_power_ms2 = Some(lf);
    out.hf_power_ms2 = Some(hf);
    out.total_power_ms2 = Some(total);
    let peak = |power: f64, band: Band| if power > 0.0 { band_peak(psd, band) } else { None };
    out.vlf_peak_hz = peak(vlf, cfg.vlf);
    out.lf_peak_hz = peak(lf, cfg.lf);
    out.hf_peak_hz = peak(hf, cfg.hf);
    if total > 0.0 {
        out.vlf_pct = Some(vlf / total * 100.0);
        out.lf_pct = Some(lf / total * 100.0);
        out.hf_pct = Some(hf / total * 100.0);
    }
    if lf + hf > 0.0 {
        out.lf_nu = Some(lf / (lf + hf) * 100.0);
        out.hf_nu = Some(hf / (lf + hf) * 100.0);
    }
    if hf > 0.0 {
        out.lf_hf_ratio = Some(lf / hf);
    }
    out
}

/// PSD plus band metrics for an RR_nI_m series.
pub fn compute_freq_metrics(series: &RnimSeries, cfg: &FreqConfig) -> Result<FreqMetrics, FreqError> {
    let psd = series_psd(series, cfg)?;
    Ok(band_metrics(&psd, cfg))
}
