//! Shared value types: ECG records, peak annotations, interval series and
//! metric reports, plus the elementary conversions between them.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("sampling rate must be positive, got {0}")]
    InvalidSamplingRate(f64),
    #[error("record has no samples")]
    EmptySignal,
    #[error("segment {start}:{end} is not within 0..{len}")]
    InvalidSegment { start: usize, end: usize, len: usize },
    #[error("peaks are not strictly increasing at position {0}")]
    PeaksNotIncreasing(usize),
    #[error("at least two peaks are needed to form an interval, got {0}")]
    FewerThanTwoPeaks(usize),
    #[error("interval {index} is not a positive finite value ({value})")]
    NonPositiveInterval { index: usize, value: f64 },
}

/// Single-channel sampled ECG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRecord {
    pub record_id: String,
    pub fs: f64,
    pub samples: Vec<f64>,
    pub segment: Option<Range<usize>>,
}

impl EcgRecord {
    pub fn new(
        record_id: impl Into<String>,
        fs: f64,
        samples: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(ModelError::InvalidSamplingRate(fs));
        }
        if samples.is_empty() {
            return Err(ModelError::EmptySignal);
        }
        Ok(Self {
            record_id: record_id.into(),
            fs,
            samples,
            segment: None,
        })
    }

    pub fn with_segment(mut self, segment: Range<usize>) -> Result<Self, ModelError> {
        check_segment(&segment, self.samples.len())?;
        self.segment = Some(segment);
        Ok(self)
    }

    /// The analysed sample range: the selected segment, or the whole record.
    pub fn active_range(&self) -> Range<usize> {
        self.segment.clone().unwrap_or(0..self.samples.len())
    }

    pub fn active_samples(&self) -> &[f64] {
        &self.samples[self.active_range()]
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

pub(crate) fn check_segment(segment: &Range<usize>, len: usize) -> Result<(), ModelError> {
    if segment.start >= segment.end || segment.end > len {
        return Err(ModelError::InvalidSegment {
            start: segment.start,
            end: segment.end,
            len,
        });
    }
    Ok(())
}

/// R-peak sample indices for one record. Edits produce a new value with
/// `version` bumped by one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakAnnotations {
    pub record_id: String,
    pub fs: f64,
    pub peaks: Vec<usize>,
    pub version: u64,
    /// Sample range the peaks were detected in, if restricted.
    #[serde(default)]
    pub segment: Option<Range<usize>>,
}

impl PeakAnnotations {
    pub fn new(
        record_id: impl Into<String>,
        fs: f64,
        peaks: Vec<usize>,
    ) -> Result<Self, ModelError> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(ModelError::InvalidSamplingRate(fs));
        }
        if let Some(pos) = first_non_increasing(&peaks) {
            return Err(ModelError::PeaksNotIncreasing(pos));
        }
        Ok(Self {
            record_id: record_id.into(),
            fs,
            peaks,
            version: 0,
            segment: None,
        })
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn peak_times_ms(&self) -> Vec<f64> {
        self.peaks
            .iter()
            .map(|&p| p as f64 / self.fs * 1000.0)
            .collect()
    }
}

pub(crate) fn first_non_increasing(peaks: &[usize]) -> Option<usize> {
    peaks.windows(2).position(|w| w[1] <= w[0]).map(|i| i + 1)
}

/// Per-interval quality label. Removed intervals are simply absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeatFlag {
    Clean,
    NonSinus,
    Interpolated,
}

/// Beat accounting for the original RRI.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IbiStats {
    pub total: usize,
    pub abnormal: usize,
    pub clean: usize,
    pub removed: usize,
    pub interpolated: usize,
}

impl IbiStats {
    pub fn all_clean(total: usize) -> Self {
        Self {
            total,
            clean: total,
            ..Self::default()
        }
    }

    /// Percentage of intervals that passed the outlier check.
    pub fn clean_pct(&self) -> Option<f64> {
        (self.total > 0).then(|| self.clean as f64 / self.total as f64 * 100.0)
    }
}

/// Inter-beat intervals in milliseconds.
///
/// `onset_times_ms[i]` is the cumulative sum of intervals up to and including
/// `i`, i.e. the time of the beat that closes interval `i` measured from the
/// first beat. `origin_ms` is the absolute time of that first beat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbiSeries {
    pub record_id: String,
    pub intervals_ms: Vec<f64>,
    pub onset_times_ms: Vec<f64>,
    pub flags: Vec<BeatFlag>,
    pub stats: IbiStats,
    pub origin_ms: f64,
}

impl IbiSeries {
    /// Builds an all-clean series from interval values.
    pub fn from_intervals(
        record_id: impl Into<String>,
        intervals_ms: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if let Some((index, &value)) = intervals_ms
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(ModelError::NonPositiveInterval { index, value });
        }
        let n = intervals_ms.len();
        Ok(Self {
            record_id: record_id.into(),
            onset_times_ms: cumulative_sum(&intervals_ms),
            intervals_ms,
            flags: vec![BeatFlag::Clean; n],
            stats: IbiStats::all_clean(n),
            origin_ms: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.intervals_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals_ms.is_empty()
    }

    pub fn has_unrepaired(&self) -> bool {
        self.flags.contains(&BeatFlag::NonSinus)
    }
}

pub(crate) fn cumulative_sum(values: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Converts R-peak positions to inter-beat intervals.
pub fn ibi_from_peaks(peaks: &PeakAnnotations) -> Result<IbiSeries, ModelError> {
    if peaks.peaks.len() < 2 {
        return Err(ModelError::FewerThanTwoPeaks(peaks.peaks.len()));
    }
    let intervals: Vec<f64> = peaks
        .peaks
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / peaks.fs * 1000.0)
        .collect();
    let mut ibi = IbiSeries::from_intervals(peaks.record_id.clone(), intervals)?;
    ibi.origin_ms = peaks.peaks[0] as f64 / peaks.fs * 1000.0;
    Ok(ibi)
}

/// Strips `prefix` and `postfix` from a file name to obtain a record ID.
/// When either affix does not match, the full file name is returned.
pub fn extract_record_id(filename: &str, prefix: &str, postfix: &str) -> String {
    filename
        .strip_prefix(prefix)
        .and_then(|rest| rest.strip_suffix(postfix))
        .filter(|id| !id.is_empty())
        .unwrap_or(filename)
        .to_string()
}

/// An RR_nI_m series: sums of `n` consecutive intervals taken every `m` beats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnimSeries {
    pub record_id: String,
    pub n: usize,
    pub m: usize,
    pub values_ms: Vec<f64>,
    /// Time axis used by spectral estimators, in ms.
    pub times_ms: Vec<f64>,
    pub source_len: usize,
}

impl RnimSeries {
    pub fn len(&self) -> usize {
        self.values_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_ms.is_empty()
    }

    /// Expected output length for a parent series of `source_len` intervals.
    pub fn expected_len(source_len: usize, n: usize, m: usize) -> usize {
        if source_len + 1 < n || m == 0 {
            0
        } else {
            (source_len + 1 - n) / m
        }
    }
}

/// Which abnormal-beat details a report carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportIbiStats {
    /// Number of intervals in the analysed series.
    pub beats: usize,
    /// Original-RRI breakdown, present only on the (1, 1) report.
    pub original: Option<IbiStats>,
}

/// Full HR_nV_m metric set for one (record, n, m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub record_id: String,
    pub n: usize,
    pub m: usize,
    pub time: crate::time_domain::TimeMetrics,
    pub freq: crate::freq::FreqMetrics,
    pub nonlinear: crate::nonlinear::NonlinearMetrics,
    pub ibi_stats: ReportIbiStats,
    pub not_computable: BTreeSet<String>,
}

impl MetricsReport {
    /// Every numeric metric in column order. `None` marks not computable.
    pub fn metric_values(&self) -> Vec<(&'static str, Option<f64>)> {
        let mut out = self.time.values();
        out.extend(self.freq.values());
        out.extend(self.nonlinear.values());
        out.push(("beats", Some(self.ibi_stats.beats as f64)));
        if let Some(stats) = self.ibi_stats.original {
            out.push(("beats_total", Some(stats.total as f64)));
            out.push(("beats_abnormal", Some(stats.abnormal as f64)));
            out.push(("beats_removed", Some(stats.removed as f64)));
            out.push(("beats_interpolated", Some(stats.interpolated as f64)));
            out.push(("clean_pct", stats.clean_pct()));
        }
        out
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.metric_values()
            .into_iter()
            .find(|(name, _)| *name == metric)
            .and_then(|(_, v)| v)
    }

    pub(crate) fn collect_not_computable(&mut self) {
        self.not_computable = self
            .metric_values()
            .into_iter()
            .filter(|(_, v)| v.is_none())
            .map(|(name, _)| name.to_string())
            .collect();
    }
}
