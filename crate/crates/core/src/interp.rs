//! One-dimensional interpolants used for interval repair and tachogram
//! resampling: piecewise linear, not-a-knot cubic spline and PCHIP.
//!
//! Cubic variants are stored as Hermite data (node values plus slopes) and
//! evaluated piecewise. Outside the node range every interpolant extends its
//! end piece.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpKind {
    Linear,
    Spline,
    Pchip,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterpError {
    #[error("no nodes to interpolate")]
    Empty,
    #[error("node count mismatch: {xs} abscissae, {ys} ordinates")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("abscissae must be strictly increasing (position {0})")]
    NotIncreasing(usize),
}

#[derive(Debug, Clone)]
pub struct Interpolant {
    xs: Vec<f64>,
    ys: Vec<f64>,
    // None for piecewise linear
    slopes: Option<Vec<f64>>,
}

impl Interpolant {
    pub fn new(kind: InterpKind, xs: &[f64], ys: &[f64]) -> Result<Self, InterpError> {
        if xs.len() != ys.len() {
            return Err(InterpError::LengthMismatch {
                xs: xs.len(),
                ys: ys.len(),
            });
        }
        if xs.is_empty() {
            return Err(InterpError::Empty);
        }
        if let Some(i) = xs.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(InterpError::NotIncreasing(i + 1));
        }
        let slopes = match kind {
            InterpKind::Linear => None,
            _ if xs.len() < 3 => None,
            InterpKind::Spline => Some(not_a_knot_slopes(xs, ys)),
            InterpKind::Pchip => Some(pchip_slopes(xs, ys)),
        };
        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            slopes,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 {
            return self.ys[0];
        }
        // index of the piece containing x, clamped to the end pieces
        let k = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.xs[k + 1] - self.xs[k];
        let s = x - self.xs[k];
        let delta = (self.ys[k + 1] - self.ys[k]) / h;
        match &self.slopes {
            None => self.ys[k] + s * delta,
            Some(d) => {
                let c = (3.0 * delta - 2.0 * d[k] - d[k + 1]) / h;
                let b = (d[k] - 2.0 * delta + d[k + 1]) / (h * h);
                self.ys[k] + s * (d[k] + s * (c + s * b))
            }
        }
    }
}

fn secants(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let del = ys
        .windows(2)
        .zip(&h)
        .map(|(w, h)| (w[1] - w[0]) / h)
        .collect();
    (h, del)
}

/// Node slopes of the not-a-knot cubic spline (requires ≥ 3 nodes).
fn not_a_knot_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let (h, del) = secants(xs, ys);
    if n == 3 {
        // the not-a-knot spline through three points is the parabola
        let c = (del[1] - del[0]) / (h[0] + h[1]);
        return vec![
            del[0] - c * h[0],
            del[0] + c * h[0],
            del[0] + c * (h[0] + 2.0 * h[1]),
        ];
    }
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];

    let x31 = h[0] + h[1];
    diag[0] = h[1];
    upper[0] = x31;
    rhs[0] = ((h[0] + 2.0 * x31) * h[1] * del[0] + h[0] * h[0] * del[1]) / x31;
    for i in 1..n - 1 {
        lower[i] = h[i];
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        upper[i] = h[i - 1];
        rhs[i] = 3.0 * (h[i] * del[i - 1] + h[i - 1] * del[i]);
    }
    let xn = h[n - 3] + h[n - 2];
    lower[n - 1] = xn;
    diag[n - 1] = h[n - 3];
    rhs[n - 1] =
        (h[n - 2] * h[n - 2] * del[n - 3] + (2.0 * xn + h[n - 2]) * h[n - 3] * del[n - 2]) / xn;
    solve_tridiagonal(&lower, &mut diag, &upper, &mut rhs);
    rhs
}

/// Thomas algorithm. `lower[0]` and `upper[n-1]` are unused. Solution is
/// written into `rhs`.
fn solve_tridiagonal(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    for i in 1..n {
        let w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
}

/// Fritsch–Carlson shape-preserving slopes with three-point end conditions.
fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let (h, del) = secants(xs, ys);
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if del[k - 1] * del[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
        }
    }
    d[0] = pchip_end(h[0], h[1], del[0], del[1]);
    d[n - 1] = pchip_end(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

fn pchip_end(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() || del0 == 0.0 {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}
