//! RR_nI_m construction and analysis-plan enumeration.
//!
//! Element `i` (0-based) of an RR_nI_m series is the left-to-right sum of the
//! parent intervals `i*m .. i*m + n`. The series has `⌊(N − n + 1)/m⌋`
//! elements for a parent of length `N`; RR_1I_1 is the parent itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{cumulative_sum, IbiSeries, RnimSeries};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransformError {
    #[error("invalid parameters n = {n}, m = {m}: need 1 ≤ m ≤ n")]
    InvalidParameters { n: usize, m: usize },
    #[error("series still contains {0} unrepaired non-sinus intervals")]
    UnrepairedIntervals(usize),
}

/// Builds the RR_nI_m series from a cleaned RRI.
///
/// The time axis is the running sum of the new values when `m == n` and the
/// parent onset time of each window's first interval otherwise.
pub fn build_rrnim(ibi: &IbiSeries, n: usize, m: usize) -> Result<RnimSeries, TransformError> {
    if n < 1 || m < 1 || m > n {
        return Err(TransformError::InvalidParameters { n, m });
    }
    let unrepaired = ibi
        .flags
        .iter()
        .filter(|f| **f == crate::model::BeatFlag::NonSinus)
        .count();
    if unrepaired > 0 {
        return Err(TransformError::UnrepairedIntervals(unrepaired));
    }

    let x = &ibi.intervals_ms;
    let len = RnimSeries::expected_len(x.len(), n, m);
    let values_ms: Vec<f64> = (0..len)
        .map(|i| {
            let start = i * m;
            let mut acc = 0.0;
            for v in &x[start..start + n] {
                acc += v;
            }
            acc
        })
        .collect();
    let times_ms = if m == n {
        cumulative_sum(&values_ms)
    } else {
        (0..len).map(|i| ibi.onset_times_ms[i * m]).collect()
    };

    Ok(RnimSeries {
        record_id: ibi.record_id.clone(),
        n,
        m,
        values_ms,
        times_ms,
        source_len: x.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    #[default]
    Single,
    MEqualsN,
    All,
}

/// Expands a plan mode into the `(n, m)` pairs to analyse.
pub fn enumerate_plans(
    mode: PlanMode,
    n: usize,
    m: Option<usize>,
) -> Result<Vec<(usize, usize)>, TransformError> {
    if n < 1 {
        return Err(TransformError::InvalidParameters { n, m: m.unwrap_or(0) });
    }
    match mode {
        PlanMode::Single => {
            let m = m.unwrap_or(n);
            if m < 1 || m > n {
                return Err(TransformError::InvalidParameters { n, m });
            }
            Ok(vec![(n, m)])
        }
        PlanMode::MEqualsN => Ok(vec![(n, n)]),
        PlanMode::All => Ok((1..=n)
            .flat_map(|nn| (1..=nn).map(move |mm| (nn, mm)))
            .collect()),
    }
}
