//! R-peak detection on single-channel ECG.
//!
//! The detector is an energy detector: zero-phase 5–25 Hz band-pass, squaring,
//! centred 150 ms moving-window integration, then an adaptive threshold set to a
//! fraction of an exponentially decaying running peak of the integrated signal.
//! A refractory period suppresses double detections and a search-back pass at
//! half threshold recovers beats missed after sudden amplitude drops.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{check_segment, EcgRecord, ModelError, PeakAnnotations};

/// Minimum sampling rate accepted by the detector.
pub const MIN_FS_HZ: f64 = 60.0;
/// Minimum analysed duration.
pub const MIN_DURATION_S: f64 = 2.0;

const BASELINE_SHORT_MS: f64 = 200.0;
const BASELINE_LONG_MS: f64 = 600.0;
// Time constant of the running-peak decay.
const PEAK_DECAY_S: f64 = 3.0;
const SEARCHBACK_THRESHOLD_SCALE: f64 = 0.5;
const RR_HISTORY: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QrsError {
    #[error("sampling rate {0} Hz is below the {MIN_FS_HZ} Hz minimum")]
    SamplingRateTooLow(f64),
    #[error("analysed segment is {0:.3} s long; at least {MIN_DURATION_S} s is required")]
    SegmentTooShort(f64),
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
    #[error("peak {0} is not in the annotation set")]
    UnknownPeak(usize),
    #[error("peak {0} is already annotated or added twice")]
    DuplicatePeak(usize),
    #[error("peak {index} is outside the record (0..{len})")]
    OutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SnapMode {
    #[default]
    None,
    LocalMax,
    LocalMin,
    /// Local max for upright leads, local min for inverted ones.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub bandpass_low_hz: f64,
    pub bandpass_high_hz: f64,
    pub integration_window_ms: f64,
    pub refractory_ms: f64,
    pub threshold_fraction: f64,
    pub searchback_factor: f64,
    pub snap_window_ms: f64,
    pub snap_mode: SnapMode,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            bandpass_low_hz: 5.0,
            bandpass_high_hz: 25.0,
            integration_window_ms: 150.0,
            refractory_ms: 250.0,
            threshold_fraction: 0.3,
            searchback_factor: 1.5,
            snap_window_ms: 50.0,
            snap_mode: SnapMode::None,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self, fs: f64) -> Result<(), QrsError> {
        let bad = |msg: String| Err(QrsError::InvalidConfig(msg));
        if !(self.bandpass_low_hz > 0.0
            && self.bandpass_low_hz < self.bandpass_high_hz
            && self.bandpass_high_hz < fs / 2.0)
        {
            return bad(format!(
                "band-pass corners must satisfy 0 < {} < {} < fs/2 = {}",
                self.bandpass_low_hz,
                self.bandpass_high_hz,
                fs / 2.0
            ));
        }
        if !(self.refractory_ms > 0.0) {
            return bad(format!("refractory_ms must be positive, got {}", self.refractory_ms));
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction < 1.0) {
            return bad(format!(
                "threshold_fraction must be in (0, 1), got {}",
                self.threshold_fraction
            ));
        }
        if !(self.integration_window_ms > 0.0) {
            return bad("integration_window_ms must be positive".into());
        }
        if !(self.searchback_factor > 1.0) {
            return bad("searchback_factor must exceed 1".into());
        }
        if self.snap_mode != SnapMode::None && !(self.snap_window_ms > 0.0) {
            return bad("snap_window_ms must be positive".into());
        }
        Ok(())
    }
}

fn ms_to_samples(ms: f64, fs: f64) -> usize {
    (ms * fs / 1000.0).round() as usize
}

fn odd_window(ms: f64, fs: f64) -> usize {
    ms_to_samples(ms, fs).max(1) | 1
}

/// Running median with a centred window of odd length, truncated at the edges.
pub fn moving_median(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = x.len();
    let mut sorted: Vec<f64> = Vec::with_capacity(window + 1);
    let mut out = Vec::with_capacity(n);
    let (mut lo, mut hi) = (0usize, 0usize);
    for i in 0..n {
        let want_lo = i.saturating_sub(half);
        let want_hi = (i + half + 1).min(n);
        while hi < want_hi {
            let v = x[hi];
            let pos = sorted.partition_point(|&s| s < v);
            sorted.insert(pos, v);
            hi += 1;
        }
        while lo < want_lo {
            let v = x[lo];
            let pos = sorted.partition_point(|&s| s < v);
            sorted.remove(pos);
            lo += 1;
        }
        out.push(median_of_sorted(&sorted));
    }
    out
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_of_sorted(&v)
}

/// Subtracts a two-stage moving-median baseline (200 ms then 600 ms).
pub fn remove_baseline(record: &EcgRecord) -> EcgRecord {
    let short = moving_median(&record.samples, odd_window(BASELINE_SHORT_MS, record.fs));
    let baseline = moving_median(&short, odd_window(BASELINE_LONG_MS, record.fs));
    let samples = record
        .samples
        .iter()
        .zip(&baseline)
        .map(|(x, b)| x - b)
        .collect();
    EcgRecord {
        samples,
        ..record.clone()
    }
}

/// Second-order section in direct form I.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    // Butterworth (Q = 1/√2) sections from the bilinear transform.
    fn butterworth(fs: f64, corner_hz: f64, highpass: bool) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * corner_hz / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / std::f64::consts::SQRT_2;
        let a0 = 1.0 + alpha;
        let b = if highpass {
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0]
        } else {
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0]
        };
        Self {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = *v;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }
}

/// Zero-phase band-pass: the cascade is run forward then backward over the
/// signal extended at both ends by odd reflection.
fn bandpass_zero_phase(x: &[f64], fs: f64, low: f64, high: f64) -> Vec<f64> {
    let n = x.len();
    // one filter length: roughly the settling time of the high-pass corner
    let pad = ((3.0 * fs / low).ceil() as usize).min(n.saturating_sub(1));
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let sections = [
        Biquad::butterworth(fs, low, true),
        Biquad::butterworth(fs, high, false),
    ];
    for s in &sections {
        s.run(&mut ext);
    }
    ext.reverse();
    for s in &sections {
        s.run(&mut ext);
    }
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

fn centred_moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / window as f64
        })
        .collect()
}

/// Detects R peaks in the record's active range. Returned indices are in the
/// record's sample domain.
pub fn detect_r_peaks(record: &EcgRecord, cfg: &DetectorConfig) -> Result<PeakAnnotations, QrsError> {
    let fs = record.fs;
    if fs < MIN_FS_HZ {
        return Err(QrsError::SamplingRateTooLow(fs));
    }
    cfg.validate(fs)?;
    let range = record.active_range();
    check_segment(&range, record.samples.len())?;
    let x = &record.samples[range.clone()];
    let duration = x.len() as f64 / fs;
    if duration < MIN_DURATION_S {
        return Err(QrsError::SegmentTooShort(duration));
    }

    let local = detect_local(x, fs, cfg);
    let refractory = (cfg.refractory_ms * fs / 1000.0).ceil() as usize;

    let mode = match cfg.snap_mode {
        SnapMode::Auto => auto_snap_mode(x, &local),
        m => m,
    };
    let snapped = match mode {
        SnapMode::LocalMax | SnapMode::LocalMin => {
            snap_indices(x, &local, mode == SnapMode::LocalMax, ms_to_samples(cfg.snap_window_ms, fs))
        }
        _ => local,
    };
    let mut peaks: Vec<usize> = Vec::with_capacity(snapped.len());
    for p in snapped {
        if peaks.last().is_none_or(|&last| p - last >= refractory) {
            peaks.push(p);
        }
    }

    let mut ann = PeakAnnotations::new(
        record.record_id.clone(),
        fs,
        peaks.into_iter().map(|p| p + range.start).collect(),
    )?;
    ann.segment = record.segment.clone();
    Ok(ann)
}

fn detect_local(x: &[f64], fs: f64, cfg: &DetectorConfig) -> Vec<usize> {
    let centre = median(x);
    let centred: Vec<f64> = x.iter().map(|v| v - centre).collect();
    if centred.iter().all(|v| *v == 0.0) {
        return Vec::new();
    }
    let bp = bandpass_zero_phase(&centred, fs, cfg.bandpass_low_hz, cfg.bandpass_high_hz);
    let squared: Vec<f64> = bp.iter().map(|v| v * v).collect();
    let window = odd_window(cfg.integration_window_ms, fs);
    let energy = centred_moving_average(&squared, window);

    let candidates: Vec<usize> = (1..energy.len().saturating_sub(1))
        .filter(|&i| energy[i] > energy[i - 1] && energy[i] >= energy[i + 1])
        .collect();
    if candidates.is_empty() {
        return Vec::new();
    }

    let refractory = (cfg.refractory_ms * fs / 1000.0).ceil() as usize;
    let decay = (-1.0 / (PEAK_DECAY_S * fs)).exp();
    let warmup = ((2.0 * fs) as usize).min(energy.len());
    let mut running_peak = energy[..warmup].iter().cloned().fold(0.0, f64::max);
    let mut peak_time = 0usize;

    // positions into `candidates`
    let mut accepted: Vec<usize> = Vec::new();
    let mut rr: Vec<usize> = Vec::new();

    let accept = |accepted: &mut Vec<usize>, rr: &mut Vec<usize>, pos: usize| {
        if let Some(&last) = accepted.last() {
            rr.push(candidates[pos] - candidates[last]);
        }
        accepted.push(pos);
    };

    for pos in 0..candidates.len() {
        let c = candidates[pos];
        let decayed = running_peak * decay.powi((c - peak_time) as i32);
        let threshold = cfg.threshold_fraction * decayed;

        if let (Some(&last_pos), true) = (accepted.last(), rr.len() >= 2) {
            let last = candidates[last_pos];
            let recent = &rr[rr.len().saturating_sub(RR_HISTORY)..];
            let recent: Vec<f64> = recent.iter().map(|&v| v as f64).collect();
            let expected = median(&recent);
            if (c - last) as f64 > cfg.searchback_factor * expected {
                let best = (last_pos + 1..pos)
                    .filter(|&q| {
                        candidates[q] >= last + refractory && candidates[q] + refractory <= c
                    })
                    .max_by(|&a, &b| energy[candidates[a]].total_cmp(&energy[candidates[b]]));
                if let Some(q) = best {
                    if energy[candidates[q]] > SEARCHBACK_THRESHOLD_SCALE * threshold {
                        accept(&mut accepted, &mut rr, q);
                    }
                }
            }
        }

        if energy[c] <= threshold {
            continue;
        }
        match accepted.last() {
            Some(&last_pos) if c - candidates[last_pos] < refractory => {
                if energy[c] > energy[candidates[last_pos]] {
                    accepted.pop();
                    rr.pop();
                    accept(&mut accepted, &mut rr, pos);
                } else {
                    continue;
                }
            }
            _ => accept(&mut accepted, &mut rr, pos),
        }
        running_peak = decayed.max(energy[c]);
        peak_time = c;
    }

    // locate the R apex as the largest band-passed excursion under each hump
    let half = window / 2;
    let mut out: Vec<usize> = Vec::with_capacity(accepted.len());
    for pos in accepted {
        let c = candidates[pos];
        let lo = c.saturating_sub(half);
        let hi = (c + half + 1).min(bp.len());
        let apex = (lo..hi)
            .max_by(|&a, &b| bp[a].abs().total_cmp(&bp[b].abs()))
            .unwrap_or(c);
        if out.last().is_none_or(|&l| apex > l) {
            out.push(apex);
        }
    }
    out
}

fn auto_snap_mode(x: &[f64], peaks: &[usize]) -> SnapMode {
    if peaks.is_empty() {
        return SnapMode::None;
    }
    let amplitudes: Vec<f64> = peaks.iter().map(|&p| x[p]).collect();
    if median(&amplitudes) >= median(x) {
        SnapMode::LocalMax
    } else {
        SnapMode::LocalMin
    }
}

/// Moves each index to the extremum within `±window`. A moved index must stay
/// strictly between its predecessor's output and its successor's original
/// position; otherwise it keeps its original position.
fn snap_indices(x: &[f64], peaks: &[usize], to_max: bool, window: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(peaks.len());
    for (i, &p) in peaks.iter().enumerate() {
        let lo = p.saturating_sub(window);
        let hi = (p + window + 1).min(x.len());
        let cmp = |a: &usize, b: &usize| {
            let ord = x[*a].total_cmp(&x[*b]);
            if to_max {
                ord
            } else {
                ord.reverse()
            }
        };
        // ties resolve to the earliest index
        let target = (lo..hi).rev().max_by(cmp).unwrap_or(p);
        let after_prev = out.last().is_none_or(|&prev| target > prev);
        let before_next = peaks.get(i + 1).is_none_or(|&next| target < next);
        out.push(if after_prev && before_next { target } else { p });
    }
    out
}

/// Moves each peak to the local maximum or minimum of the signal within
/// `±window_ms`, keeping the sequence strictly increasing.
pub fn snap_peaks(
    record: &EcgRecord,
    peaks: &PeakAnnotations,
    mode: SnapMode,
    window_ms: f64,
) -> Result<PeakAnnotations, QrsError> {
    if !(window_ms > 0.0) {
        return Err(QrsError::InvalidConfig("snap window must be positive".into()));
    }
    if let Some(&bad) = peaks.peaks.iter().find(|&&p| p >= record.samples.len()) {
        return Err(QrsError::OutOfRange {
            index: bad,
            len: record.samples.len(),
        });
    }
    let mode = match mode {
        SnapMode::Auto => auto_snap_mode(&record.samples, &peaks.peaks),
        m => m,
    };
    if mode == SnapMode::None {
        return Ok(peaks.clone());
    }
    let snapped = snap_indices(
        &record.samples,
        &peaks.peaks,
        mode == SnapMode::LocalMax,
        ms_to_samples(window_ms, record.fs),
    );
    Ok(PeakAnnotations {
        peaks: snapped,
        ..peaks.clone()
    })
}

/// A batch of manual corrections.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakEdit {
    #[serde(default)]
    pub add: Vec<usize>,
    #[serde(default)]
    pub remove: Vec<usize>,
}

/// Applies removals then additions, returning a new annotation set with the
/// version bumped by one. `signal_len` bounds added indices.
pub fn apply_peak_edits(
    peaks: &PeakAnnotations,
    edit: &PeakEdit,
    signal_len: usize,
) -> Result<PeakAnnotations, QrsError> {
    let mut set: BTreeSet<usize> = peaks.peaks.iter().copied().collect();
    for &r in &edit.remove {
        if !set.remove(&r) {
            return Err(QrsError::UnknownPeak(r));
        }
    }
    for &a in &edit.add {
        if a >= signal_len {
            return Err(QrsError::OutOfRange {
                index: a,
                len: signal_len,
            });
        }
        if !set.insert(a) {
            return Err(QrsError::DuplicatePeak(a));
        }
    }
    Ok(PeakAnnotations {
        peaks: set.into_iter().collect(),
        version: peaks.version + 1,
        ..peaks.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::EcgSynth;
    use proptest::prelude::*;

    fn rec(samples: Vec<f64>, fs: f64) -> EcgRecord {
        EcgRecord::new("t", fs, samples).unwrap()
    }

    #[test]
    fn moving_median_matches_brute_force() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 - (i % 3) as f64).collect();
        for w in [1usize, 3, 5, 9] {
            let fast = moving_median(&x, w);
            for i in 0..x.len() {
                let lo = i.saturating_sub(w / 2);
                let hi = (i + w / 2 + 1).min(x.len());
                assert_eq!(fast[i], median(&x[lo..hi]), "w={w} i={i}");
            }
        }
    }

    #[test]
    fn baseline_of_constant_is_removed_exactly() {
        let out = remove_baseline(&rec(vec![3.7; 1000], 128.0));
        assert!(out.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn slow_sinusoid_is_treated_as_baseline() {
        let fs = 128.0;
        let x: Vec<f64> = (0..(30.0 * fs) as usize)
            .map(|i| (2.0 * std::f64::consts::PI * 0.2 * i as f64 / fs).sin())
            .collect();
        let out = remove_baseline(&rec(x, fs));
        // truncated windows bias the first and last half second
        let edge = (0.5 * fs) as usize;
        let interior = &out.samples[edge..out.samples.len() - edge];
        let residual = interior.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(residual < 0.1, "residual amplitude {residual}");
    }

    #[test]
    fn baseline_removal_preserves_qrs_amplitude() {
        let clean = EcgSynth {
            duration_s: 30.0,
            ..EcgSynth::default()
        }
        .generate("c");
        let ramped = EcgSynth {
            duration_s: 30.0,
            ramp_per_s: 0.05,
            ..EcgSynth::default()
        }
        .generate("r");
        let out = remove_baseline(&ramped.record);
        for p in clean.r_peaks() {
            let before = clean.record.samples[p];
            let after = out.samples[p];
            assert!(
                ((after - before) / before).abs() < 0.05,
                "peak {p}: {before} vs {after}"
            );
        }
    }

    #[test]
    fn detects_every_beat_of_noiseless_ecg() {
        let ecg = EcgSynth::default().generate("s");
        let found = detect_r_peaks(&ecg.record, &DetectorConfig::default()).unwrap();
        let truth = ecg.r_peaks();
        assert!((found.len() as i64 - 300).abs() <= 1, "{} peaks", found.len());
        assert_eq!(found.len(), truth.len());
        for (f, t) in found.peaks.iter().zip(&truth) {
            let err_ms = (*f as f64 - *t as f64).abs() / 128.0 * 1000.0;
            assert!(err_ms <= 40.0, "peak {f} vs truth {t}");
        }
    }

    #[test]
    fn flat_line_has_no_peaks() {
        let found = detect_r_peaks(&rec(vec![0.5; 1280], 128.0), &DetectorConfig::default()).unwrap();
        assert!(found.is_empty());
    }

    #[test]
    fn inverted_lead_snaps_to_minima() {
        let upright = EcgSynth::default().generate("u");
        let inverted = EcgSynth {
            gain: -1.0,
            ..EcgSynth::default()
        }
        .generate("i");
        let cfg = DetectorConfig {
            snap_mode: SnapMode::Auto,
            ..DetectorConfig::default()
        };
        let a = detect_r_peaks(&upright.record, &cfg).unwrap();
        let b = detect_r_peaks(&inverted.record, &cfg).unwrap();
        assert_eq!(a.len(), b.len());
        let s = &inverted.record.samples;
        for (&p, &t) in b.peaks.iter().zip(&inverted.r_peaks()) {
            assert_eq!(p, t);
            assert!(s[p] <= s[p - 1] && s[p] <= s[p + 1]);
        }
    }

    #[test]
    fn rejects_low_rate_and_short_segments() {
        assert_eq!(
            detect_r_peaks(&rec(vec![0.0; 500], 50.0), &DetectorConfig::default()),
            Err(QrsError::SamplingRateTooLow(50.0))
        );
        let r = rec(vec![0.0; 1000], 128.0).with_segment(0..200).unwrap();
        assert!(matches!(
            detect_r_peaks(&r, &DetectorConfig::default()),
            Err(QrsError::SegmentTooShort(_))
        ));
    }

    #[test]
    fn detection_respects_segment() {
        let ecg = EcgSynth {
            duration_s: 60.0,
            ..EcgSynth::default()
        }
        .generate("s");
        let r = ecg.record.clone().with_segment(1280..3840).unwrap();
        let found = detect_r_peaks(&r, &DetectorConfig::default()).unwrap();
        assert!(!found.is_empty());
        assert!(found.peaks.iter().all(|p| (1280..3840).contains(p)));
        assert_eq!(found.segment, Some(1280..3840));
    }

    #[test]
    fn detector_is_shift_equivariant() {
        let ecg = EcgSynth {
            duration_s: 60.0,
            heart_rate_bpm: 72.0,
            ..EcgSynth::default()
        }
        .generate("s");
        let base = detect_r_peaks(&ecg.record, &DetectorConfig::default()).unwrap();
        for k in [1usize, 7, 50] {
            let mut shifted = vec![ecg.record.samples[0]; k];
            shifted.extend_from_slice(&ecg.record.samples);
            let found = detect_r_peaks(&rec(shifted, 128.0), &DetectorConfig::default()).unwrap();
            assert_eq!(found.len(), base.len());
            for (a, b) in found.peaks.iter().zip(&base.peaks) {
                assert!((*a as i64 - (*b + k) as i64).abs() <= 1);
            }
        }
    }

    #[test]
    fn snapping_a_peak_on_the_apex_is_a_fixed_point() {
        let mut x = vec![0.0; 400];
        for (i, v) in x.iter_mut().enumerate().take(120).skip(80) {
            *v = 20.0 - (i as f64 - 100.0).abs();
        }
        let r = rec(x, 128.0);
        let p = PeakAnnotations::new("t", 128.0, vec![100]).unwrap();
        assert_eq!(snap_peaks(&r, &p, SnapMode::LocalMax, 50.0).unwrap().peaks, vec![100]);
        let off = PeakAnnotations::new("t", 128.0, vec![97]).unwrap();
        assert_eq!(snap_peaks(&r, &off, SnapMode::LocalMax, 50.0).unwrap().peaks, vec![100]);
    }

    #[test]
    fn snapping_never_merges_neighbours() {
        // 260 ms apart at 1 kHz, single apex between them, window wide enough for both
        let mut x = vec![0.0; 1000];
        for (i, v) in x.iter_mut().enumerate() {
            *v = 200.0 - (i as f64 - 250.0).abs();
        }
        let r = rec(x, 1000.0);
        let p = PeakAnnotations::new("t", 1000.0, vec![150, 410]).unwrap();
        let out = snap_peaks(&r, &p, SnapMode::LocalMax, 200.0).unwrap();
        assert_eq!(out.peaks, vec![250, 410]);
    }

    #[test]
    fn edits_follow_set_algebra() {
        let p = PeakAnnotations::new("t", 100.0, vec![10, 20, 30]).unwrap();
        let same = apply_peak_edits(&p, &PeakEdit::default(), 100).unwrap();
        assert_eq!(same.peaks, p.peaks);
        assert_eq!(same.version, 1);
        let edit = PeakEdit {
            add: vec![22],
            remove: vec![20],
        };
        assert_eq!(apply_peak_edits(&p, &edit, 100).unwrap().peaks, vec![10, 22, 30]);
    }

    #[test]
    fn edit_errors() {
        let p = PeakAnnotations::new("t", 100.0, vec![10]).unwrap();
        let e = |add: Vec<usize>, remove: Vec<usize>| apply_peak_edits(&p, &PeakEdit { add, remove }, 50);
        assert_eq!(e(vec![], vec![15]), Err(QrsError::UnknownPeak(15)));
        assert_eq!(e(vec![10], vec![]), Err(QrsError::DuplicatePeak(10)));
        assert_eq!(e(vec![12, 12], vec![]), Err(QrsError::DuplicatePeak(12)));
        assert_eq!(e(vec![50], vec![]), Err(QrsError::OutOfRange { index: 50, len: 50 }));
        assert!(e(vec![10], vec![10]).is_ok());
    }

    proptest! {
        #[test]
        fn edits_keep_peaks_strictly_increasing(
            initial in proptest::collection::btree_set(0usize..5000, 0..60),
            adds in proptest::collection::btree_set(0usize..5000, 0..30),
            remove_mask in proptest::collection::vec(any::<bool>(), 60),
        ) {
            let p = PeakAnnotations::new("t", 250.0, initial.iter().copied().collect()).unwrap();
            let remove: Vec<usize> = p.peaks.iter().zip(&remove_mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect();
            let survivors: BTreeSet<usize> = initial.difference(&remove.iter().copied().collect()).copied().collect();
            let add: Vec<usize> = adds.difference(&survivors).copied().collect();
            let out = apply_peak_edits(&p, &PeakEdit { add, remove }, 5000).unwrap();
            prop_assert!(out.peaks.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(out.version, 1);
        }

        #[test]
        fn refractory_bounds_intervals(hr in 40.0f64..150.0, seed in 0u64..1000) {
            let ecg = EcgSynth { duration_s: 20.0, heart_rate_bpm: hr, jitter_ms: 20.0, snr_db: Some(15.0), seed, ..EcgSynth::default() }.generate("p");
            let found = detect_r_peaks(&ecg.record, &DetectorConfig::default()).unwrap();
            for w in found.peaks.windows(2) {
                prop_assert!((w[1] - w[0]) as f64 / 128.0 * 1000.0 >= 250.0);
            }
        }
    }
}
