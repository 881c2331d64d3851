//! Heart rate n-variability analysis: R-peak detection, interval cleaning,
//! RR_nI_m series construction and HR_nV_m metrics.
//!
//! The usual entry point is [`pipeline::analyze`], which takes an
//! [`AnalysisRequest`] and returns one [`MetricsReport`] per (n, m) plan.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod freq;
pub mod interp;
pub mod io;
pub mod model;
pub mod nonlinear;
pub mod pipeline;
pub mod preprocess;
pub mod qrs;
pub mod synth;
pub mod time_domain;
pub mod transform;

pub use freq::{Band, FreqConfig, FreqMetrics, PsdEstimate, PsdMethod};
pub use io::{InputDescriptor, InputKind, ReportRow, RriUnit, SignalData, TableRow};
pub use model::{
    BeatFlag, EcgRecord, IbiSeries, IbiStats, MetricsReport, ModelError, PeakAnnotations, ReportIbiStats, RnimSeries,
};
pub use nonlinear::{DfaConfig, EntropyConfig, NonlinearMetrics};
pub use pipeline::{AnalysisRequest, AnalysisSettings, BatchOptions, InputSource, PipelineError, PlanSpec};
pub use preprocess::{PreprocessConfig, RepairAction};
pub use qrs::{DetectorConfig, PeakEdit, SnapMode};
pub use time_domain::TimeMetrics;
pub use transform::PlanMode;
