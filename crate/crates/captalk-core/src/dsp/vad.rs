//! Energy-based voice activity detection.
//!
//! A frame is voiced when its energy in dB exceeds the noise floor by
//! `vad_threshold_db`. The noise floor is the 10th-percentile frame energy,
//! clamped to at most `vad_floor_clamp_db` so recordings without silence
//! still detect speech. A one-frame hangover smooths the decision: a frame is
//! voiced if it or either neighbor passes the threshold.

use super::{DspConfig, VoicingMask, Waveform};
use crate::error::Result;
use crate::num::Real;

/// Guards the log for exactly-silent frames (-120 dB).
const ENERGY_EPS: f64 = 1e-12;

pub fn vad<F: Real>(w: &Waveform<F>, cfg: &DspConfig<F>) -> Result<VoicingMask<F>> {
    let n_frames = w.n_frames();
    let energies_db: Vec<f64> = (0..n_frames)
        .map(|i| {
            let (start, end) = w.frame_bounds(i);
            let frame = &w.samples()[start..end];
            let mean_sq = frame
                .iter()
                .map(|&s| (s * s).to_f64().unwrap_or(0.0))
                .sum::<f64>()
                / frame.len().max(1) as f64;
            10.0 * (mean_sq + ENERGY_EPS).log10()
        })
        .collect();

    let floor = noise_floor(&energies_db).min(cfg.vad_floor_clamp_db.to_f64().unwrap());
    let threshold = floor + cfg.vad_threshold_db.to_f64().unwrap();
    let raw: Vec<bool> = energies_db.iter().map(|&e| e > threshold).collect();

    let voiced: Vec<bool> = (0..n_frames)
        .map(|i| {
            raw[i]
                || (i > 0 && raw[i - 1])
                || (i + 1 < n_frames && raw[i + 1])
        })
        .collect();

    Ok(VoicingMask::new(voiced, w.duration_sec()))
}

/// 10th-percentile frame energy in dB (nearest-rank on the sorted list).
fn noise_floor(energies_db: &[f64]) -> f64 {
    let mut sorted = energies_db.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((sorted.len() - 1) as f64 * 0.10).floor() as usize;
    sorted[idx]
}
