//! Unified token-sequence layout for both branches.
//!
//! Single branch order: `[c_cap, e_spk, c_txt, a]`.
//! Dialogue branch order: `[c_cap, e_spk, c_ctx, c_txt, c_cot, a]`.
//!
//! The speaker condition occupies one reserved slot whose embedding is
//! injected externally. Caption/context/text subsequences arrive already
//! tokenized (markers included); the five control-attribute tokens are
//! delimited here so the control mask covers exactly those five positions.

pub mod assemble;
pub mod codec;
pub mod loss;
pub mod predictor;
pub mod vocab;

pub use loss::{
    base_loss_dialogue, base_loss_single, frame_nll, total_loss, LossReport, LossWeights,
};
pub use predictor::{ContextHashPredictor, FramePredictor, OneHotOracle, UniformPredictor};
pub use vocab::{Marker, TokenKind, Vocabulary, N_CODEBOOKS};

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type TokenId = u32;

/// One acoustic frame: sixteen codebook entries.
pub type FrameCodes = [u16; N_CODEBOOKS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Single,
    Dialogue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutMode {
    /// The control label is required.
    Training,
    /// The control label may be absent; it is generated downstream.
    Inference,
}

/// Marker ids a layout needs; extracted once from the vocabulary.
#[derive(Debug, Clone, Copy)]
pub struct LayoutMarkers {
    pub espk_slot: TokenId,
    pub cot_start: TokenId,
    pub cot_end: TokenId,
    pub audio_start: TokenId,
}

impl LayoutMarkers {
    pub fn from_vocab(v: &Vocabulary) -> Self {
        Self {
            espk_slot: v.marker(Marker::EspkSlot),
            cot_start: v.marker(Marker::CotStart),
            cot_end: v.marker(Marker::CotEnd),
            audio_start: v.marker(Marker::AudioStart),
        }
    }
}

/// One laid-out training sample: the prefix token sequence, the reserved
/// speaker-condition slot, the acoustic frame matrix, and the loss masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub instance_id: String,
    pub branch: Branch,
    pub prefix: Vec<TokenId>,
    /// Position of the continuous speaker-condition slot in `prefix`.
    pub espk_slot_index: usize,
    /// T × 16 acoustic codes.
    pub frames: Vec<FrameCodes>,
    /// All frame indices (the first-codebook loss covers every frame).
    pub c0_mask: Vec<usize>,
    /// Sampled subset of frames for the remaining-codebook loss.
    pub dec_mask: Vec<usize>,
    /// Prefix positions of the supervised target-text tokens.
    pub txt_mask: Vec<usize>,
    /// Prefix positions of the five control-attribute tokens.
    pub cot_mask: Vec<usize>,
}

impl TrainingSample {
    /// Checks the mask structure: masks in range, pairwise disjoint prefix
    /// masks, `dec ⊆ c0`.
    pub fn validate(&self) -> Result<()> {
        for &i in self.txt_mask.iter().chain(&self.cot_mask) {
            if i >= self.prefix.len() {
                return Err(Error::Layout(format!("mask position {i} out of prefix")));
            }
        }
        if self.txt_mask.iter().any(|i| self.cot_mask.contains(i)) {
            return Err(Error::Layout("txt and cot masks overlap".into()));
        }
        for &t in self.c0_mask.iter().chain(&self.dec_mask) {
            if t >= self.frames.len() {
                return Err(Error::Layout(format!("frame index {t} out of range")));
            }
        }
        if self.dec_mask.iter().any(|t| !self.c0_mask.contains(t)) {
            return Err(Error::Layout("dec_mask not a subset of c0_mask".into()));
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// Installs a sampled decoder-frame subset.
    pub fn with_dec_mask(mut self, dec_mask: Vec<usize>) -> Result<Self> {
        self.dec_mask = dec_mask;
        self.validate()?;
        Ok(self)
    }
}

/// Lays out a single-branch sample: `[c_cap, e_spk, c_txt, a]`. The text
/// mask covers exactly the target-text tokens; the control mask is empty.
pub fn layout_single(
    instance_id: impl Into<String>,
    cap: &[TokenId],
    txt: &[TokenId],
    frames: Vec<FrameCodes>,
    m: &LayoutMarkers,
) -> Result<TrainingSample> {
    if cap.is_empty() {
        return Err(Error::Layout("empty caption".into()));
    }
    if txt.is_empty() {
        return Err(Error::Layout("empty text".into()));
    }
    if frames.is_empty() {
        return Err(Error::Layout("need at least one acoustic frame".into()));
    }

    let mut prefix = Vec::with_capacity(cap.len() + 1 + txt.len() + 1);
    prefix.extend_from_slice(cap);
    let espk_slot_index = prefix.len();
    prefix.push(m.espk_slot);
    let txt_start = prefix.len();
    prefix.extend_from_slice(txt);
    prefix.push(m.audio_start);

    let sample = TrainingSample {
        instance_id: instance_id.into(),
        branch: Branch::Single,
        espk_slot_index,
        txt_mask: (txt_start..txt_start + txt.len()).collect(),
        cot_mask: Vec::new(),
        c0_mask: (0..frames.len()).collect(),
        dec_mask: Vec::new(),
        prefix,
        frames,
    };
    sample.validate()?;
    Ok(sample)
}

/// Lays out a dialogue-branch sample:
/// `[c_cap, e_spk, c_ctx, c_txt, c_cot, a]`. In training mode the five
/// control tokens are required; in inference mode the prefix stops at the
/// control-start marker and the control mask is empty.
pub fn layout_dialogue(
    instance_id: impl Into<String>,
    cap: &[TokenId],
    ctx: &[TokenId],
    txt: &[TokenId],
    cot: Option<&[TokenId; 5]>,
    frames: Vec<FrameCodes>,
    m: &LayoutMarkers,
    mode: LayoutMode,
) -> Result<TrainingSample> {
    if cap.is_empty() {
        return Err(Error::Layout("empty caption".into()));
    }
    if txt.is_empty() {
        return Err(Error::Layout("empty text".into()));
    }
    if cot.is_none() && mode == LayoutMode::Training {
        return Err(Error::Layout(
            "control label required in training mode".into(),
        ));
    }
    if frames.is_empty() && mode == LayoutMode::Training {
        return Err(Error::Layout("need at least one acoustic frame".into()));
    }

    let mut prefix = Vec::new();
    prefix.extend_from_slice(cap);
    let espk_slot_index = prefix.len();
    prefix.push(m.espk_slot);
    prefix.extend_from_slice(ctx);
    let txt_start = prefix.len();
    prefix.extend_from_slice(txt);
    prefix.push(m.cot_start);
    let mut cot_mask = Vec::new();
    if let Some(values) = cot {
        let cot_start_pos = prefix.len();
        prefix.extend_from_slice(values);
        cot_mask = (cot_start_pos..cot_start_pos + 5).collect();
        prefix.push(m.cot_end);
        prefix.push(m.audio_start);
    }

    let sample = TrainingSample {
        instance_id: instance_id.into(),
        branch: Branch::Dialogue,
        espk_slot_index,
        txt_mask: (txt_start..txt_start + txt.len()).collect(),
        cot_mask,
        c0_mask: (0..frames.len()).collect(),
        dec_mask: Vec::new(),
        prefix,
        frames,
    };
    sample.validate()?;
    Ok(sample)
}

/// Recovers `(cap, txt, frames)` from a single-branch sample.
pub fn decode_single(s: &TrainingSample) -> Result<(Vec<TokenId>, Vec<TokenId>, Vec<FrameCodes>)> {
    if s.branch != Branch::Single {
        return Err(Error::Layout("not a single-branch sample".into()));
    }
    let cap = s.prefix[..s.espk_slot_index].to_vec();
    // prefix ends with the audio-start marker
    let txt = s.prefix[s.espk_slot_index + 1..s.prefix.len() - 1].to_vec();
    Ok((cap, txt, s.frames.clone()))
}

/// Uniform without-replacement sample of `max(1, round(fraction·T))` frame
/// indices, deterministic per seed; returned sorted.
pub fn sample_dec_frames(t: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::BadFraction(fraction));
    }
    if t == 0 {
        return Err(Error::EmptyInput);
    }
    let size = ((fraction * t as f64).round() as usize).clamp(1, t);
    let mut indices: Vec<usize> = (0..t).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..size {
        let j = rng.random_range(i..t);
        indices.swap(i, j);
    }
    let mut picked = indices[..size].to_vec();
    picked.sort_unstable();
    Ok(picked)
}
