//! Synthetic acoustic token convention: 12.5 Hz frames, sixteen codebooks.
//!
//! Stands in for a neural codec. Each 80 ms frame pools eight 10 ms log-mel
//! frames; the forty bands fold into sixteen groups and each group's mean
//! log energy is affinely quantized into the codebook alphabet. Purely
//! deterministic in the waveform.

use super::{FrameCodes, N_CODEBOOKS};
use crate::dsp::{log_mel, DspConfig, Waveform};
use crate::error::Result;
use crate::num::Real;

/// Mel frames pooled per acoustic frame (8 × 10 ms = 80 ms = 12.5 Hz).
const MEL_FRAMES_PER_CODE_FRAME: usize = 8;

/// Upper edge of the quantizer range in log-energy units; the lower edge is
/// the configured log floor.
const QUANT_HI: f64 = 5.0;

pub fn synthetic_codes<F: Real>(
    w: &Waveform<F>,
    cfg: &DspConfig<F>,
    codebook_size: u16,
) -> Result<Vec<FrameCodes>> {
    let feats = log_mel(w, cfg)?;
    let n_mel = feats.n_frames();
    let bands = feats.n_bands();
    let t = n_mel.div_ceil(MEL_FRAMES_PER_CODE_FRAME);
    let lo = cfg.log_floor.to_f64().unwrap();
    let span = QUANT_HI - lo;

    let mut out = Vec::with_capacity(t);
    for block in 0..t {
        let row_start = block * MEL_FRAMES_PER_CODE_FRAME;
        let row_end = (row_start + MEL_FRAMES_PER_CODE_FRAME).min(n_mel);
        let mut frame: FrameCodes = [0; N_CODEBOOKS];
        for (k, code) in frame.iter_mut().enumerate() {
            let band_start = k * bands / N_CODEBOOKS;
            let band_end = (k + 1) * bands / N_CODEBOOKS;
            let mut sum = 0.0;
            let mut count = 0usize;
            for row in row_start..row_end {
                for band in band_start..band_end {
                    sum += feats.data()[(row, band)].to_f64().unwrap();
                    count += 1;
                }
            }
            let mean = sum / count as f64;
            let idx = ((mean - lo) / span * codebook_size as f64).floor();
            *code = (idx.max(0.0) as u16).min(codebook_size - 1);
        }
        out.push(frame);
    }
    Ok(out)
}
