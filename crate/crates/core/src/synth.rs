//! Deterministic synthetic fixtures: ECG traces with known R-peak positions
//! and interval series with known spectral content. Used by tests, benches
//! and the demo workflow.

use std::f64::consts::PI;

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::model::{EcgRecord, IbiSeries};

/// Gaussian wave components of one beat: (offset from R in s, amplitude, width in s).
const BEAT_WAVES: [(f64, f64, f64); 5] = [
    (-0.20, 0.12, 0.025),
    (-0.028, -0.12, 0.008),
    (0.0, 1.0, 0.010),
    (0.028, -0.25, 0.008),
    (0.28, 0.30, 0.040),
];

#[derive(Debug, Clone)]
pub struct EcgSynth {
    pub fs: f64,
    pub duration_s: f64,
    pub heart_rate_bpm: f64,
    /// Standard deviation of beat-to-beat jitter in ms.
    pub jitter_ms: f64,
    /// Relative depth of respiratory modulation of the RR interval.
    pub resp_depth: f64,
    /// White-noise level relative to the noiseless trace power; `None` is noiseless.
    pub snr_db: Option<f64>,
    /// Slope of a linear baseline ramp in amplitude units per second.
    pub ramp_per_s: f64,
    /// Amplitude of a 0.2 Hz baseline wander.
    pub wander: f64,
    /// Overall gain; negative values invert the lead.
    pub gain: f64,
    pub seed: u64,
}

impl Default for EcgSynth {
    fn default() -> Self {
        Self {
            fs: 128.0,
            duration_s: 300.0,
            heart_rate_bpm: 60.0,
            jitter_ms: 0.0,
            resp_depth: 0.0,
            snr_db: None,
            ramp_per_s: 0.0,
            wander: 0.0,
            gain: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticEcg {
    pub record: EcgRecord,
    /// Exact R apex times in seconds.
    pub r_times_s: Vec<f64>,
}

impl SyntheticEcg {
    /// Ground-truth R peaks rounded to the nearest sample.
    pub fn r_peaks(&self) -> Vec<usize> {
        self.r_times_s
            .iter()
            .map(|t| (t * self.record.fs).round() as usize)
            .collect()
    }
}

impl EcgSynth {
    pub fn generate(&self, record_id: &str) -> SyntheticEcg {
        let mut rng = StdRng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let len = (self.duration_s * self.fs).round() as usize;
        let base_rr = 60.0 / self.heart_rate_bpm;

        let mut r_times = Vec::new();
        let mut t = 0.5 * base_rr.min(1.0);
        while t < self.duration_s - 0.25 {
            r_times.push(t);
            let rr = base_rr * (1.0 + self.resp_depth * (2.0 * PI * 0.25 * t).sin())
                + self.jitter_ms / 1000.0 * normal.sample(&mut rng);
            t += rr.max(0.3);
        }

        let mut samples = vec![0.0; len];
        for &rt in &r_times {
            for &(offset, amp, width) in &BEAT_WAVES {
                let centre = rt + offset;
                let lo = ((centre - 5.0 * width) * self.fs).floor().max(0.0) as usize;
                let hi = (((centre + 5.0 * width) * self.fs).ceil() as usize).min(len);
                for (i, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
                    let dt = i as f64 / self.fs - centre;
                    *s += amp * (-0.5 * (dt / width).powi(2)).exp();
                }
            }
        }

        if let Some(snr_db) = self.snr_db {
            let power = samples.iter().map(|v| v * v).sum::<f64>() / len as f64;
            let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
            for s in &mut samples {
                *s += sigma * normal.sample(&mut rng);
            }
        }
        for (i, s) in samples.iter_mut().enumerate() {
            let ts = i as f64 / self.fs;
            *s = self.gain * *s + self.ramp_per_s * ts + self.wander * (2.0 * PI * 0.2 * ts).sin();
        }

        SyntheticEcg {
            record: EcgRecord::new(record_id, self.fs, samples).expect("valid synthetic record"),
            r_times_s: r_times,
        }
    }
}

/// Clean sinus-like RRI: mean plus respiratory modulation and Gaussian jitter.
pub fn clean_rri(record_id: &str, len: usize, mean_ms: f64, jitter_ms: f64, seed: u64) -> IbiSeries {
    let mut rng = StdRng::seed_from_u64(seed);
    let normal = Normal::new(0.0, jitter_ms.max(0.0)).unwrap();
    let mut t = 0.0;
    let values = (0..len)
        .map(|_| {
            let v = mean_ms + 0.03 * mean_ms * (2.0 * PI * 0.25 * t / 1000.0).sin()
                + normal.sample(&mut rng);
            let v = v.max(0.5 * mean_ms);
            t += v;
            v
        })
        .collect();
    IbiSeries::from_intervals(record_id, values).expect("positive intervals")
}

/// Tachogram whose value at beat time `t` (the start of the interval) is
/// `base_ms + Σ amp·sin(2π f t)` over the given `(frequency_hz, amplitude_ms)` tones.
pub fn modulated_tachogram(
    record_id: &str,
    duration_s: f64,
    base_ms: f64,
    tones: &[(f64, f64)],
) -> IbiSeries {
    let mut values = Vec::new();
    let mut t_ms = 0.0;
    while t_ms < duration_s * 1000.0 {
        let ts = t_ms / 1000.0;
        let v = base_ms
            + tones
                .iter()
                .map(|(f, a)| a * (2.0 * PI * f * ts).sin())
                .sum::<f64>();
        values.push(v);
        t_ms += v;
    }
    IbiSeries::from_intervals(record_id, values).expect("positive intervals")
}

/// i.i.d. Gaussian intervals around `mean_ms`.
pub fn white_noise_rri(record_id: &str, len: usize, mean_ms: f64, std_ms: f64, seed: u64) -> IbiSeries {
    let mut rng = StdRng::seed_from_u64(seed);
    let normal = Normal::new(mean_ms, std_ms).unwrap();
    let values = (0..len)
        .map(|_| normal.sample(&mut rng).max(0.2 * mean_ms))
        .collect();
    IbiSeries::from_intervals(record_id, values).expect("positive intervals")
}

/// Standard normal samples.
pub fn gaussian_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beat_count_matches_rate() {
        let ecg = EcgSynth::default().generate("s");
        assert_eq!(ecg.r_times_s.len(), 300);
        assert_eq!(ecg.record.samples.len(), 300 * 128);
    }

    #[test]
    fn apex_is_at_ground_truth() {
        let ecg = EcgSynth::default().generate("s");
        for &p in ecg.r_peaks().iter().take(10) {
            let s = &ecg.record.samples;
            assert!(s[p] > s[p - 1] && s[p] >= s[p + 1]);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = EcgSynth {
            snr_db: Some(20.0),
            jitter_ms: 30.0,
            seed: 9,
            ..EcgSynth::default()
        };
        assert_eq!(cfg.generate("a").record, cfg.generate("a").record);
    }
}
