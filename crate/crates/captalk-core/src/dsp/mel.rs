//! Log-mel feature front end: Hann-windowed 512-point FFT on the 25/10 ms
//! grid, 40 triangular mel filters over 0–8 kHz, natural log with a fixed
//! floor so silence maps to a finite value.

use super::{DspConfig, FeatureMatrix, Waveform, FRAME_LEN, SAMPLE_RATE};
use crate::error::Result;
use crate::num::Real;
use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

const N_FFT: usize = 512;

pub fn log_mel<F: Real>(w: &Waveform<F>, cfg: &DspConfig<F>) -> Result<FeatureMatrix<F>> {
    let n_frames = w.n_frames();
    let n_mels = cfg.n_mels;
    let filters = mel_filterbank(n_mels);
    let window = hann(FRAME_LEN);
    let log_floor = cfg.log_floor.to_f64().unwrap();
    let floor_lin = log_floor.exp();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(N_FFT);

    let mut out = Array2::<F>::zeros((n_frames, n_mels));
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];

    for frame in 0..n_frames {
        let (start, end) = w.frame_bounds(frame);
        for slot in buf.iter_mut() {
            *slot = Complex::new(0.0, 0.0);
        }
        for (i, &s) in w.samples()[start..end].iter().enumerate() {
            buf[i] = Complex::new(s.to_f64().unwrap() * window[i], 0.0);
        }
        fft.process(&mut buf);

        let power: Vec<f64> = buf[..N_FFT / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        for (band, filter) in filters.iter().enumerate() {
            let energy: f64 = filter
                .iter()
                .map(|&(bin, weight)| weight * power[bin])
                .sum();
            out[(frame, band)] = F::from_f64_c(energy.max(floor_lin).ln());
        }
    }

    Ok(FeatureMatrix::new(out))
}

fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters as sparse `(bin, weight)` lists over the one-sided
/// spectrum.
fn mel_filterbank(n_mels: usize) -> Vec<Vec<(usize, f64)>> {
    let f_max = SAMPLE_RATE as f64 / 2.0;
    let mel_lo = hz_to_mel(0.0);
    let mel_hi = hz_to_mel(f_max);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = SAMPLE_RATE as f64 / N_FFT as f64;

    (0..n_mels)
        .map(|b| {
            let (lo, center, hi) = (points[b], points[b + 1], points[b + 2]);
            let mut taps = Vec::new();
            for bin in 0..=N_FFT / 2 {
                let f = bin as f64 * bin_hz;
                let weight = if f > lo && f < center {
                    (f - lo) / (center - lo)
                } else if f >= center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                if weight > 0.0 {
                    taps.push((bin, weight));
                }
            }
            taps
        })
        .collect()
}
