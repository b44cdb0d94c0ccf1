//! Deterministic signal-processing primitives.
//!
//! All analysis runs on a fixed 25 ms / 10 ms frame grid over 16 kHz mono
//! audio. Operations are pure functions of their inputs and safe to call
//! concurrently on distinct utterances.

mod mel;
mod pitch;
mod vad;
mod wav;

pub use mel::log_mel;
pub use pitch::estimate_f0;
pub use vad::vad;
pub use wav::{read_wav, write_wav_i16};

use crate::error::{Error, Result};
use crate::num::Real;
use ndarray::Array2;

/// Only supported input rate; other rates are rejected at ingestion.
pub const SAMPLE_RATE: u32 = 16_000;
/// Analysis frame length, 25 ms.
pub const FRAME_LEN: usize = 400;
/// Analysis hop, 10 ms.
pub const HOP_LEN: usize = 160;
/// Mel bands in the feature front end.
pub const N_MELS: usize = 40;

/// Seconds per hop, the unit in which voiced duration is counted.
pub const HOP_SEC: f64 = HOP_LEN as f64 / SAMPLE_RATE as f64;

/// Mono 16 kHz waveform with samples in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Waveform<F> {
    samples: Vec<F>,
}

impl<F: Real> Waveform<F> {
    /// Wraps samples already at [`SAMPLE_RATE`]. Rejects empty or non-finite
    /// input.
    pub fn new(samples: Vec<F>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::WavFormat {
                path: "<memory>".into(),
                reason: "non-finite sample".into(),
            });
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[F] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_sec(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    /// Number of frames on the 25/10 ms grid. Short inputs still get one
    /// (truncated) frame.
    pub fn n_frames(&self) -> usize {
        if self.samples.len() >= FRAME_LEN {
            1 + (self.samples.len() - FRAME_LEN) / HOP_LEN
        } else {
            1
        }
    }

    /// Sample range `[start, end)` of frame `i`, clamped to the signal.
    pub fn frame_bounds(&self, i: usize) -> (usize, usize) {
        let start = i * HOP_LEN;
        (start, (start + FRAME_LEN).min(self.samples.len()))
    }

    /// Returns a copy with every sample multiplied by `c`.
    pub fn scaled(&self, c: F) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * c).collect(),
        }
    }
}

/// Per-frame voiced flags on the same grid as [`Waveform::n_frames`].
#[derive(Debug, Clone)]
pub struct VoicingMask<F> {
    voiced: Vec<bool>,
    voiced_sec: F,
}

impl<F: Real> VoicingMask<F> {
    /// `duration_sec` caps the derived voiced duration so it never exceeds
    /// the utterance length (the first frame can outlast a very short input).
    pub fn new(voiced: Vec<bool>, duration_sec: f64) -> Self {
        let count = voiced.iter().filter(|&&v| v).count();
        let sec = (count as f64 * HOP_SEC).min(duration_sec);
        Self {
            voiced,
            voiced_sec: F::from_f64_c(sec),
        }
    }

    pub fn flags(&self) -> &[bool] {
        &self.voiced
    }

    pub fn len(&self) -> usize {
        self.voiced.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voiced.is_empty()
    }

    pub fn is_voiced(&self, frame: usize) -> bool {
        self.voiced.get(frame).copied().unwrap_or(false)
    }

    pub fn n_voiced(&self) -> usize {
        self.voiced.iter().filter(|&&v| v).count()
    }

    /// Total voiced duration in seconds, `n_voiced × 10 ms` clamped to the
    /// utterance duration.
    pub fn voiced_sec(&self) -> F {
        self.voiced_sec
    }
}

/// Per-frame fundamental-frequency estimates; `None` marks unvoiced frames.
#[derive(Debug, Clone)]
pub struct F0Track<F> {
    entries: Vec<Option<F>>,
}

impl<F: Real> F0Track<F> {
    pub fn new(entries: Vec<Option<F>>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[Option<F>] {
        &self.entries
    }

    pub fn voiced_values(&self) -> Vec<F> {
        self.entries.iter().filter_map(|e| *e).collect()
    }

    /// Median over voiced frames; `None` when every frame is unvoiced.
    pub fn median_f0(&self) -> Option<F> {
        crate::num::median(&self.voiced_values())
    }
}

/// Frames × bands matrix of log-mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<F> {
    data: Array2<F>,
}

impl<F: Real> FeatureMatrix<F> {
    pub fn new(data: Array2<F>) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &Array2<F> {
        &self.data
    }

    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_bands(&self) -> usize {
        self.data.ncols()
    }
}

/// Knobs for the analysis front end. Defaults follow the toolkit config.
#[derive(Debug, Clone)]
pub struct DspConfig<F> {
    /// Energy margin over the noise floor for a frame to count as voiced.
    pub vad_threshold_db: F,
    /// The 10th-percentile noise-floor estimate is clamped to at most this,
    /// so fully-voiced recordings with no silent tail still detect speech.
    pub vad_floor_clamp_db: F,
    pub f0_min_hz: F,
    pub f0_max_hz: F,
    /// Upper bound on the normalized-difference minimum for a frame to keep
    /// its pitch estimate.
    pub voicing_threshold: F,
    pub n_mels: usize,
    /// Floor applied before the log, `ln(1e-10)` by default.
    pub log_floor: F,
}

impl<F: Real> Default for DspConfig<F> {
    fn default() -> Self {
        Self {
            vad_threshold_db: F::from_f64_c(12.0),
            vad_floor_clamp_db: F::from_f64_c(-60.0),
            f0_min_hz: F::from_f64_c(60.0),
            // 450 keeps the 440 Hz semitone reference inside the search
            // range; 400 would fold a 440 Hz voice onto its 220 Hz
            // subharmonic.
            f0_max_hz: F::from_f64_c(450.0),
            voicing_threshold: F::from_f64_c(0.3),
            n_mels: N_MELS,
            log_floor: F::from_f64_c(1e-10f64.ln()),
        }
    }
}

/// Pitch in semitones relative to 440 Hz: `12·log2(f/440)`.
pub fn hz_to_semitone<F: Real>(f: F) -> Result<F> {
    if f <= F::zero() || !f.is_finite() {
        return Err(Error::NonPositiveFrequency(f.to_f64().unwrap_or(f64::NAN)));
    }
    let twelve = F::from_f64_c(12.0);
    let reference = F::from_f64_c(440.0);
    Ok(twelve * (f / reference).log2())
}

/// Root-mean-square over the samples belonging to voiced frames only.
///
/// Frames overlap, so membership is the union of voiced frame ranges; each
/// sample is counted once.
pub fn rms_energy<F: Real>(w: &Waveform<F>, mask: &VoicingMask<F>) -> Result<F> {
    let mut in_voiced = vec![false; w.len()];
    let mut any = false;
    for frame in 0..w.n_frames().min(mask.len()) {
        if mask.is_voiced(frame) {
            any = true;
            let (start, end) = w.frame_bounds(frame);
            in_voiced[start..end].iter_mut().for_each(|f| *f = true);
        }
    }
    if !any {
        return Err(Error::NoVoicedSpeech);
    }
    let mut sum_sq = F::zero();
    let mut count = 0usize;
    for (s, &keep) in w.samples().iter().zip(&in_voiced) {
        if keep {
            sum_sq += *s * *s;
            count += 1;
        }
    }
    Ok((sum_sq / F::from_f64_c(count as f64)).sqrt())
}

#[cfg(test)]
pub(crate) mod testsig {
    //! Synthetic signal helpers shared by the dsp tests.

    use super::*;

    pub fn sine<F: Real>(freq_hz: f64, amplitude: f64, seconds: f64) -> Waveform<F> {
        let n = (seconds * SAMPLE_RATE as f64).round() as usize;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / SAMPLE_RATE as f64;
                F::from_f64_c(amplitude * (2.0 * std::f64::consts::PI * freq_hz * t).sin())
            })
            .collect();
        Waveform::new(samples).unwrap()
    }

    pub fn silence<F: Real>(seconds: f64) -> Waveform<F> {
        let n = (seconds * SAMPLE_RATE as f64).round() as usize;
        Waveform::new(vec![F::zero(); n]).unwrap()
    }

    pub fn concat<F: Real>(a: &Waveform<F>, b: &Waveform<F>) -> Waveform<F> {
        let mut samples = a.samples().to_vec();
        samples.extend_from_slice(b.samples());
        Waveform::new(samples).unwrap()
    }

    pub fn all_voiced<F: Real>(w: &Waveform<F>) -> VoicingMask<F> {
        VoicingMask::new(vec![true; w.n_frames()], w.duration_sec())
    }
}
