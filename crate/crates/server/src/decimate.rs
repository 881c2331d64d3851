//! Min–max waveform decimation for display.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Waveform {
    pub start: usize,
    pub end: usize,
    pub decimated: bool,
    /// Sample index of each returned point, increasing.
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

/// Returns the samples `start..end` of `x`, or, when the range holds more than
/// `max_points` samples, the minimum and maximum of each of `max_points`
/// equal buckets in index order. The extremes of the range always survive.
pub fn decimate(x: &[f64], start: usize, end: usize, max_points: usize) -> Waveform {
    let len = end - start;
    if len <= max_points || max_points == 0 {
        return Waveform {
            start,
            end,
            decimated: false,
            indices: (start..end).collect(),
            values: x[start..end].to_vec(),
        };
    }
    let mut indices = Vec::with_capacity(2 * max_points);
    for b in 0..max_points {
        let lo = start + b * len / max_points;
        let hi = start + (b + 1) * len / max_points;
        let (mut imin, mut imax) = (lo, lo);
        for i in lo..hi {
            if x[i] < x[imin] {
                imin = i;
            }
            if x[i] > x[imax] {
                imax = i;
            }
        }
        match imin.cmp(&imax) {
            std::cmp::Ordering::Less => indices.extend([imin, imax]),
            std::cmp::Ordering::Greater => indices.extend([imax, imin]),
            std::cmp::Ordering::Equal => indices.push(imin),
        }
    }
    let values = indices.iter().map(|&i| x[i]).collect();
    Waveform {
        start,
        end,
        decimated: true,
        indices,
        values,
    }
}
