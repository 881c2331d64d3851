//! Non-sinus interval detection and repair on the original RRI.
//!
//! An interval is flagged when it deviates from the median of the (up to) five
//! intervals centred on it by more than the threshold fraction. Flagged
//! intervals are then either dropped or replaced by an interpolant of the
//! clean intervals over onset time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::{InterpKind, Interpolant};
use crate::model::{cumulative_sum, BeatFlag, IbiSeries, IbiStats};
use crate::qrs::median;

pub const NEIGHBORHOOD: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("threshold must be in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("every interval is flagged; nothing to repair from")]
    NothingClean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RepairAction {
    #[default]
    Remove,
    Spline,
    Pchip,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub threshold: f64,
    pub action: RepairAction,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            threshold: 0.2,
            action: RepairAction::Remove,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.threshold > 0.0 && self.threshold < 1.0 {
            Ok(())
        } else {
            Err(PreprocessError::InvalidThreshold(self.threshold))
        }
    }
}

/// Marks non-sinus intervals. Values are untouched; flags and stats are
/// recomputed from the values alone, so the operation is idempotent.
pub fn flag_outliers(ibi: &IbiSeries, cfg: &PreprocessConfig) -> Result<IbiSeries, PreprocessError> {
    cfg.validate()?;
    let x = &ibi.intervals_ms;
    let half = NEIGHBORHOOD / 2;
    let flags: Vec<BeatFlag> = (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            let med = median(&x[lo..hi]);
            if ((x[i] - med) / med).abs() > cfg.threshold {
                BeatFlag::NonSinus
            } else {
                BeatFlag::Clean
            }
        })
        .collect();
    let abnormal = flags.iter().filter(|f| **f == BeatFlag::NonSinus).count();
    Ok(IbiSeries {
        flags,
        stats: IbiStats {
            total: x.len(),
            abnormal,
            clean: x.len() - abnormal,
            removed: 0,
            interpolated: 0,
        },
        ..ibi.clone()
    })
}

/// Removes or interpolates flagged intervals. Interpolated values that come
/// out non-positive are removed instead.
pub fn repair(ibi: &IbiSeries, cfg: &PreprocessConfig) -> Result<IbiSeries, PreprocessError> {
    cfg.validate()?;
    if !ibi.has_unrepaired() {
        return Ok(ibi.clone());
    }
    let clean: Vec<usize> = (0..ibi.len())
        .filter(|&i| ibi.flags[i] != BeatFlag::NonSinus)
        .collect();
    if clean.is_empty() {
        return Err(PreprocessError::NothingClean);
    }

    let kind = match cfg.action {
        RepairAction::Remove => None,
        RepairAction::Spline => Some(InterpKind::Spline),
        RepairAction::Pchip => Some(InterpKind::Pchip),
        RepairAction::Linear => Some(InterpKind::Linear),
    };

    let mut values = Vec::with_capacity(ibi.len());
    let mut flags = Vec::with_capacity(ibi.len());
    let mut stats = ibi.stats;
    let interpolant = match kind {
        Some(kind) => {
            let xs: Vec<f64> = clean.iter().map(|&i| ibi.onset_times_ms[i]).collect();
            let ys: Vec<f64> = clean.iter().map(|&i| ibi.intervals_ms[i]).collect();
            Some(Interpolant::new(kind, &xs, &ys).expect("onset times strictly increase"))
        }
        None => None,
    };

    for i in 0..ibi.len() {
        if ibi.flags[i] != BeatFlag::NonSinus {
            values.push(ibi.intervals_ms[i]);
            flags.push(ibi.flags[i]);
            continue;
        }
        match &interpolant {
            Some(f) => {
                let v = f.eval(ibi.onset_times_ms[i]);
                if v.is_finite() && v > 0.0 {
                    values.push(v);
                    flags.push(BeatFlag::Interpolated);
                    stats.interpolated += 1;
                } else {
                    log::warn!(
                        "{}: interpolated interval {i} is {v}; removing it instead",
                        ibi.record_id
                    );
                    stats.removed += 1;
                }
            }
            None => stats.removed += 1,
        }
    }

    Ok(IbiSeries {
        record_id: ibi.record_id.clone(),
        onset_times_ms: cumulative_sum(&values),
        intervals_ms: values,
        flags,
        stats,
        origin_ms: ibi.origin_ms,
    })
}

/// `flag_outliers` followed by `repair`.
pub fn clean(ibi: &IbiSeries, cfg: &PreprocessConfig) -> Result<IbiSeries, PreprocessError> {
    repair(&flag_outliers(ibi, cfg)?, cfg)
}
