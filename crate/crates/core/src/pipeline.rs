//! End-to-end analysis: input → peaks → intervals → cleaning → RR_nI_m
//! series → metric reports. Also batch processing and the comparison harness
//! used to check results against a reference implementation.

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freq::{band_metrics, series_psd, FreqConfig, FreqError, FreqMetrics};
use crate::io::{read_signal, FormatError, InputDescriptor, InputKind, ReportRow, SignalData, TableRow};
use crate::model::{ibi_from_peaks, EcgRecord, IbiSeries, IbiStats, MetricsReport, ModelError, PeakAnnotations, ReportIbiStats, RnimSeries};
use crate::nonlinear::{compute_nonlinear_metrics, DfaConfig, EntropyConfig, NonlinearError};
use crate::preprocess::{clean, PreprocessConfig, PreprocessError};
use crate::qrs::{detect_r_peaks, remove_baseline, DetectorConfig, QrsError};
use crate::time_domain::compute_time_metrics;
use crate::transform::{build_rrnim, enumerate_plans, PlanMode, TransformError};

/// Guard term in the relative-error denominator.
pub const EPSILON_GUARD: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Qrs(#[from] QrsError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Freq(#[from] FreqError),
    #[error(transparent)]
    Nonlinear(#[from] NonlinearError),
    #[error("segment {start}:{end} given for a non-ECG input")]
    SegmentOnNonEcg { start: usize, end: usize },
    #[error("record '{record}' is an ECG; batch mode accepts RRI or peaks inputs unless unattended ECG analysis is enabled")]
    BatchTypeViolation { record: String },
    #[error("annotations are not comparable: {a} vs {b} peaks")]
    CountMismatch { a: usize, b: usize },
    #[error("reports are for different plans: {left} vs {right}")]
    PlanMismatch { left: String, right: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    Ecg(EcgRecord),
    Rri(IbiSeries),
    Peaks(PeakAnnotations),
    File(InputDescriptor),
}

impl InputSource {
    pub fn is_ecg(&self) -> bool {
        match self {
            InputSource::Ecg(_) => true,
            InputSource::File(d) => d.kind == InputKind::Ecg,
            _ => false,
        }
    }

    pub fn record_id(&self) -> String {
        match self {
            InputSource::Ecg(r) => r.record_id.clone(),
            InputSource::Rri(s) => s.record_id.clone(),
            InputSource::Peaks(p) => p.record_id.clone(),
            InputSource::File(d) => d.record_id(),
        }
    }

    fn load(&self) -> Result<SignalData, PipelineError> {
        Ok(match self {
            InputSource::Ecg(r) => SignalData::Ecg(r.clone()),
            InputSource::Rri(s) => SignalData::Rri(s.clone()),
            InputSource::Peaks(p) => SignalData::Peaks(p.clone()),
            InputSource::File(d) => read_signal(d)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanSpec {
    pub mode: PlanMode,
    pub n: usize,
    pub m: Option<usize>,
}

impl Default for PlanSpec {
    fn default() -> Self {
        Self {
            mode: PlanMode::Single,
            n: 1,
            m: None,
        }
    }
}

/// Settings shared by every record of an analysis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSettings {
    pub segment: Option<Range<usize>>,
    pub baseline_remove: bool,
    pub detector: DetectorConfig,
    pub preprocess: PreprocessConfig,
    pub plan: PlanSpec,
    pub freq: FreqConfig,
    pub entropy: EntropyConfig,
    pub dfa: DfaConfig,
}

impl AnalysisSettings {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.preprocess.validate()?;
        self.freq.validate()?;
        self.entropy.validate()?;
        enumerate_plans(self.plan.mode, self.plan.n, self.plan.m)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRequest {
    pub input: InputSource,
    pub settings: AnalysisSettings,
}

impl AnalysisRequest {
    pub fn new(input: InputSource, settings: AnalysisSettings) -> Self {
        Self { input, settings }
    }
}

/// Prepares an ECG for detection: applies the segment and optional baseline
/// removal.
pub fn prepare_ecg(record: &EcgRecord, settings: &AnalysisSettings) -> Result<EcgRecord, PipelineError> {
    let mut rec = record.clone();
    if let Some(seg) = &settings.segment {
        rec = rec.with_segment(seg.clone())?;
    }
    if settings.baseline_remove {
        rec = remove_baseline(&rec);
    }
    Ok(rec)
}

/// Peaks and intervals of the request input, before cleaning.
pub fn extract_intervals(request: &AnalysisRequest) -> Result<(IbiSeries, Option<PeakAnnotations>), PipelineError> {
    let settings = &request.settings;
    match request.input.load()? {
        SignalData::Ecg(rec) => {
            let rec = prepare_ecg(&rec, settings)?;
            let peaks = detect_r_peaks(&rec, &settings.detector)?;
            Ok((ibi_from_peaks(&peaks)?, Some(peaks)))
        }
        other => {
            if let Some(seg) = &settings.segment {
                return Err(PipelineError::SegmentOnNonEcg {
                    start: seg.start,
                    end: seg.end,
                });
            }
            match other {
                SignalData::Peaks(p) => Ok((ibi_from_peaks(&p)?, Some(p))),
                SignalData::Rri(s) => Ok((s, None)),
                SignalData::Ecg(_) => unreachable!(),
            }
        }
    }
}

/// Assembles the report for one series. Metric families that cannot be
/// computed leave their values empty.
pub fn report_for_series(series: &RnimSeries, original: Option<IbiStats>, settings: &AnalysisSettings) -> MetricsReport {
    let time = compute_time_metrics(series).unwrap_or_default();
    let freq = match series_psd(series, &settings.freq) {
        Ok(psd) => band_metrics(&psd, &settings.freq),
        Err(e) => {
            log::debug!("{} (n={}, m={}): no spectrum: {e}", series.record_id, series.n, series.m);
            FreqMetrics::empty(&settings.freq)
        }
    };
    let nonlinear = compute_nonlinear_metrics(series, &settings.entropy, &settings.dfa);
    let mut report = MetricsReport {
        record_id: series.record_id.clone(),
        n: series.n,
        m: series.m,
        time,
        freq,
        nonlinear,
        ibi_stats: ReportIbiStats {
            beats: series.len(),
            original,
        },
        not_computable: Default::default(),
    };
    report.collect_not_computable();
    report
}

/// Runs every plan on an already extracted interval series.
pub fn analyze_intervals(ibi: &IbiSeries, settings: &AnalysisSettings) -> Result<Vec<MetricsReport>, PipelineError> {
    settings.validate()?;
    let cleaned = clean(ibi, &settings.preprocess)?;
    let plans = enumerate_plans(settings.plan.mode, settings.plan.n, settings.plan.m)?;
    plans
        .into_iter()
        .map(|(n, m)| {
            let series = build_rrnim(&cleaned, n, m)?;
            let original = ((n, m) == (1, 1)).then_some(cleaned.stats);
            Ok(report_for_series(&series, original, settings))
        })
        .collect()
}

pub fn analyze(request: &AnalysisRequest) -> Result<Vec<MetricsReport>, PipelineError> {
    request.settings.validate()?;
    let (ibi, _) = extract_intervals(request)?;
    analyze_intervals(&ibi, &request.settings)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchOptions {
    pub unattended_ecg: bool,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
}

/// Analyses every request, keeping input order. A failing record becomes an
/// error row; only a type violation rejects the batch as a whole.
pub fn analyze_batch(requests: &[AnalysisRequest], opts: BatchOptions) -> Result<Vec<TableRow>, PipelineError> {
    if !opts.unattended_ecg {
        if let Some(r) = requests.iter().find(|r| r.input.is_ecg()) {
            return Err(PipelineError::BatchTypeViolation {
                record: r.input.record_id(),
            });
        }
    }
    let run = |r: &AnalysisRequest| -> Vec<TableRow> {
        match analyze(r) {
            Ok(reports) => reports.into_iter().map(TableRow::Report).collect(),
            Err(e) => {
                log::warn!("{}: {e}", r.input.record_id());
                vec![TableRow::Error {
                    record_id: r.input.record_id(),
                    message: e.to_string(),
                }]
            }
        }
    };
    let per_record: Vec<Vec<TableRow>> = if opts.jobs == 1 {
        requests.iter().map(run).collect()
    } else {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if opts.jobs > 0 {
            builder = builder.num_threads(opts.jobs);
        }
        match builder.build() {
            Ok(pool) => pool.install(|| requests.par_iter().map(run).collect()),
            Err(e) => {
                log::warn!("thread pool unavailable ({e}); running serially");
                requests.iter().map(run).collect()
            }
        }
    };
    Ok(per_record.into_iter().flatten().collect())
}

/// Sum of absolute sample offsets between paired peaks.
pub fn compare_annotations(a: &PeakAnnotations, b: &PeakAnnotations) -> Result<u64, PipelineError> {
    if a.len() != b.len() {
        return Err(PipelineError::CountMismatch { a: a.len(), b: b.len() });
    }
    Ok(a.peaks
        .iter()
        .zip(&b.peaks)
        .map(|(&x, &y)| x.abs_diff(y) as u64)
        .sum())
}

pub fn relative_error(h: f64, p: f64) -> f64 {
    (h - p).abs() / (p.abs() + EPSILON_GUARD)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricComparison {
    RelativeError { value: f64 },
    /// Neither side could compute the metric.
    BothNotComputable,
    /// Exactly one side computed the metric.
    StatusMismatch { left_computable: bool },
}

impl MetricComparison {
    pub fn agrees(&self, tolerance: f64) -> bool {
        match self {
            MetricComparison::RelativeError { value } => *value <= tolerance,
            MetricComparison::BothNotComputable => true,
            MetricComparison::StatusMismatch { .. } => false,
        }
    }
}

fn plan_label(id: &str, n: Option<usize>, m: Option<usize>) -> String {
    let show = |v: Option<usize>| v.map_or_else(|| "?".to_string(), |v| v.to_string());
    format!("{id} (n={}, m={})", show(n), show(m))
}

/// Per-metric comparison of two parsed report rows for the same plan. Only
/// metrics present in both rows are compared.
pub fn compare_rows(h: &ReportRow, p: &ReportRow) -> Result<BTreeMap<String, MetricComparison>, PipelineError> {
    if h.record_id != p.record_id || h.n != p.n || h.m != p.m || h.n.is_none() {
        return Err(PipelineError::PlanMismatch {
            left: plan_label(&h.record_id, h.n, h.m),
            right: plan_label(&p.record_id, p.n, p.m),
        });
    }
    Ok(h.metrics
        .iter()
        .filter_map(|(name, hv)| {
            let pv = p.metrics.get(name)?;
            let cmp = match (hv, pv) {
                (Some(a), Some(b)) => MetricComparison::RelativeError {
                    value: relative_error(*a, *b),
                },
                (None, None) => MetricComparison::BothNotComputable,
                (a, _) => MetricComparison::StatusMismatch {
                    left_computable: a.is_some(),
                },
            };
            Some((name.clone(), cmp))
        })
        .collect())
}

pub fn compare_reports(h: &MetricsReport, p: &MetricsReport) -> Result<BTreeMap<String, MetricComparison>, PipelineError> {
    compare_rows(&ReportRow::from(h), &ReportRow::from(p))
}
