//! Excitation signals and SNR-based noise calibration.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `u(k) = offset + Σ_j amp_j · sin(freq_j · ts · k + phase_j)`.
///
/// Frequencies are taken literally as the factor multiplying `ts · k`, i.e. in
/// rad/s when `ts` is in seconds.
pub fn multisine(
    amplitudes: &[f64],
    frequencies: &[f64],
    phases: &[f64],
    offset: f64,
    ts: f64,
    n: usize,
) -> Result<Vec<f64>> {
    if amplitudes.len() != frequencies.len() || amplitudes.len() != phases.len() {
        return Err(Error::Parameter(format!(
            "multisine coefficient lists differ in length ({}, {}, {})",
            amplitudes.len(),
            frequencies.len(),
            phases.len()
        )));
    }
    Ok((0..n)
        .map(|k| {
            let t = ts * k as f64;
            offset
                + amplitudes
                    .iter()
                    .zip(frequencies)
                    .zip(phases)
                    .map(|((a, w), ph)| a * (w * t + ph).sin())
                    .sum::<f64>()
        })
        .collect())
}

/// One linear frequency sweep `offset + amplitude·sin(2π(f0·t + (f1 − f0)·t²/(2T)))`
/// over `samples` steps, where `T` is the segment duration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChirpSegment {
    pub amplitude: f64,
    pub f0_hz: f64,
    pub f1_hz: f64,
    pub offset: f64,
    pub samples: usize,
}

pub fn chirp(segment: &ChirpSegment, ts: f64) -> Vec<f64> {
    let duration = ts * segment.samples as f64;
    let rate = if duration > 0.0 {
        (segment.f1_hz - segment.f0_hz) / duration
    } else {
        0.0
    };
    (0..segment.samples)
        .map(|k| {
            let t = ts * k as f64;
            let phase = 2.0 * PI * (segment.f0_hz * t + 0.5 * rate * t * t);
            segment.offset + segment.amplitude * phase.sin()
        })
        .collect()
}

/// Concatenation of chirp segments.
pub fn chirp_series(segments: &[ChirpSegment], ts: f64) -> Vec<f64> {
    segments.iter().flat_map(|s| chirp(s, ts)).collect()
}

/// Per-channel noise variance giving the requested signal-to-noise ratio:
/// mean square of the channel divided by `10^(snr_db/10)`.
pub fn snr_to_variance(signal: &[Vec<f64>], snr_db: f64) -> Result<Vec<f64>> {
    let first = signal
        .first()
        .ok_or_else(|| Error::Parameter("SNR calibration needs a non-empty signal".into()))?;
    let dim = first.len();
    let mut power = vec![0.0; dim];
    for (k, s) in signal.iter().enumerate() {
        if s.len() != dim {
            return Err(Error::shape(format!("signal sample {k}"), dim, s.len()));
        }
        power.iter_mut().zip(s).for_each(|(p, v)| *p += v * v);
    }
    let ratio = 10f64.powf(snr_db / 10.0);
    Ok(power
        .into_iter()
        .enumerate()
        .map(|(c, p)| {
            if p == 0.0 {
                log::warn!("channel {c} is identically zero; noise variance set to 0");
            }
            p / signal.len() as f64 / ratio
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_peak() {
        let ts = PI / 2.0;
        let u = multisine(&[1.0], &[1.0], &[0.0], 0.0, ts, 2).unwrap();
        assert_eq!(u[0], 0.0);
        assert_eq!(u[1], 1.0);
    }

    #[test]
    fn gyroscope_first_input_channel_at_origin() {
        let ts = 1e-3;
        let u = multisine(
            &[0.5, 0.5, 0.5],
            &[0.1, 1.0, 10.0],
            &[-0.3, 0.0, -2.1],
            0.3,
            ts,
            3,
        )
        .unwrap();
        let expected = 0.3 + 0.5 * ((-0.3f64).sin() + 0.0f64.sin() + (-2.1f64).sin());
        assert!((u[0] - expected).abs() <= 1e-15);
        let k = 2.0;
        let phi = (0.1 * ts * k - 0.3f64).sin() + (ts * k).sin() + (10.0 * ts * k - 2.1).sin();
        assert!((u[2] - (0.3 + 0.5 * phi)).abs() <= 1e-15);
    }

    #[test]
    fn zero_amplitudes_give_offset() {
        let u = multisine(&[0.0, 0.0], &[1.0, 3.0], &[0.2, 0.1], -0.4, 0.01, 5).unwrap();
        assert_eq!(u, vec![-0.4; 5]);
    }

    #[test]
    fn mismatched_coefficients_rejected() {
        assert!(multisine(&[1.0], &[1.0, 2.0], &[0.0], 0.0, 0.1, 3).is_err());
    }

    #[test]
    fn snr_variances() {
        let unit: Vec<Vec<f64>> = (0..4).map(|k| vec![if k % 2 == 0 { 1.0 } else { -1.0 }]).collect();
        assert!((snr_to_variance(&unit, 0.0).unwrap()[0] - 1.0).abs() <= 1e-15);
        let v35 = snr_to_variance(&unit, 35.0).unwrap()[0];
        assert!((v35 - 10f64.powf(-3.5)).abs() <= 1e-18);
        assert!((v35 - 3.162e-4).abs() < 1e-7);
        let power4: Vec<Vec<f64>> = vec![vec![2.0], vec![-2.0]];
        assert!((snr_to_variance(&power4, 10.0).unwrap()[0] - 0.4).abs() <= 1e-15);
        assert_eq!(snr_to_variance(&[vec![0.0], vec![0.0]], 20.0).unwrap(), vec![0.0]);
        assert!(snr_to_variance(&[], 20.0).is_err());
    }

    #[test]
    fn chirp_starts_at_offset_and_concatenates() {
        let seg = ChirpSegment {
            amplitude: 2.0,
            f0_hz: 0.1,
            f1_hz: 1.0,
            offset: 0.5,
            samples: 10,
        };
        let c = chirp(&seg, 0.1);
        assert_eq!(c[0], 0.5);
        assert_eq!(chirp_series(&[seg.clone(), seg], 0.1).len(), 20);
    }
}
