//! Frame-code predictors behind the factorized likelihood
//! `p(a_t) = p(a_t^1 | x_<t) · Π_k p(a_t^k | x_<t, a_t^1..a_t^{k-1})`.
//!
//! The transformers realizing this factorization are out of scope; the
//! trait lets any predictor drive the loss computation, and the shipped
//! default is a count-based predictor over hashed conditioning contexts
//! with add-alpha smoothing, so it never emits a zero probability.

use super::{TrainingSample, N_CODEBOOKS};
#[cfg(test)]
use super::FrameCodes;
use crate::num::Real;
use std::collections::HashMap;

/// Emits one probability distribution per codebook slot. Distributions sum
/// to one.
pub trait FramePredictor<F: Real> {
    /// Distribution over the first-codebook alphabet for frame `t`, given
    /// the prefix tokens and all earlier frames of `sample`.
    fn first_code(&self, sample: &TrainingSample, t: usize) -> Vec<F>;

    /// Distribution over codebook `k` (1-based within the frame, so
    /// `1 <= k < 16`) given the prefix, earlier frames, and the current
    /// frame's codes `prev = a_t^1..a_t^k`.
    fn later_code(&self, sample: &TrainingSample, t: usize, k: usize, prev: &[u16]) -> Vec<F>;

    fn codebook_entries(&self) -> usize;
}

/// Uniform distribution over every slot; its loss is exactly `ln V`.
#[derive(Debug, Clone, Copy)]
pub struct UniformPredictor {
    pub v: usize,
}

impl<F: Real> FramePredictor<F> for UniformPredictor {
    fn first_code(&self, _sample: &TrainingSample, _t: usize) -> Vec<F> {
        vec![F::one() / F::from_f64_c(self.v as f64); self.v]
    }

    fn later_code(&self, _sample: &TrainingSample, _t: usize, _k: usize, _prev: &[u16]) -> Vec<F> {
        vec![F::one() / F::from_f64_c(self.v as f64); self.v]
    }

    fn codebook_entries(&self) -> usize {
        self.v
    }
}

/// Assigns probability one to the observed code; its loss is exactly zero.
#[derive(Debug, Clone, Copy)]
pub struct OneHotOracle {
    pub v: usize,
}

impl OneHotOracle {
    fn one_hot<F: Real>(&self, code: u16) -> Vec<F> {
        let mut dist = vec![F::zero(); self.v];
        dist[code as usize] = F::one();
        dist
    }
}

impl<F: Real> FramePredictor<F> for OneHotOracle {
    fn first_code(&self, sample: &TrainingSample, t: usize) -> Vec<F> {
        self.one_hot(sample.frames[t][0])
    }

    fn later_code(&self, sample: &TrainingSample, t: usize, k: usize, _prev: &[u16]) -> Vec<F> {
        self.one_hot(sample.frames[t][k])
    }

    fn codebook_entries(&self) -> usize {
        self.v
    }
}

/// Conditioning context of one prediction slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum ContextKey {
    /// First codebook: the previous frame's codes (empty at t = 0).
    First(Vec<u16>),
    /// Later codebook `k`: the current frame's codes before it.
    Later(u8, Vec<u16>),
}

/// Count-smoothed context-hash predictor, the shipped default.
#[derive(Debug, Clone)]
pub struct ContextHashPredictor {
    v: usize,
    /// Add-alpha smoothing mass per entry.
    alpha: f64,
    counts: HashMap<ContextKey, Vec<u64>>,
}

impl ContextHashPredictor {
    pub fn new(v: usize) -> Self {
        Self {
            v,
            alpha: 1.0,
            counts: HashMap::new(),
        }
    }

    fn first_key(sample: &TrainingSample, t: usize) -> ContextKey {
        if t == 0 {
            ContextKey::First(Vec::new())
        } else {
            ContextKey::First(sample.frames[t - 1].to_vec())
        }
    }

    fn later_key(k: usize, prev: &[u16]) -> ContextKey {
        ContextKey::Later(k as u8, prev.to_vec())
    }

    /// Accumulates counts from every frame of the sample. One call is one
    /// training sweep over that sample.
    pub fn train_sweep(&mut self, sample: &TrainingSample) {
        for (t, frame) in sample.frames.iter().enumerate() {
            self.bump(Self::first_key(sample, t), frame[0]);
            for k in 1..N_CODEBOOKS {
                self.bump(Self::later_key(k, &frame[..k]), frame[k]);
            }
        }
    }

    fn bump(&mut self, key: ContextKey, code: u16) {
        let slot = self.counts.entry(key).or_insert_with(|| vec![0; self.v]);
        slot[code as usize] += 1;
    }

    fn distribution<F: Real>(&self, key: &ContextKey) -> Vec<F> {
        let total_alpha = self.alpha * self.v as f64;
        match self.counts.get(key) {
            None => vec![F::one() / F::from_f64_c(self.v as f64); self.v],
            Some(counts) => {
                let total: u64 = counts.iter().sum();
                let denom = total as f64 + total_alpha;
                counts
                    .iter()
                    .map(|&c| F::from_f64_c((c as f64 + self.alpha) / denom))
                    .collect()
            }
        }
    }

    /// Probability the smoothed counts assign after `n` identical
    /// observations: `(n + α) / (n + αV)`.
    pub fn smoothed_prob(&self, observations: u64) -> f64 {
        (observations as f64 + self.alpha) / (observations as f64 + self.alpha * self.v as f64)
    }
}

impl<F: Real> FramePredictor<F> for ContextHashPredictor {
    fn first_code(&self, sample: &TrainingSample, t: usize) -> Vec<F> {
        self.distribution(&Self::first_key(sample, t))
    }

    fn later_code(&self, _sample: &TrainingSample, _t: usize, k: usize, prev: &[u16]) -> Vec<F> {
        self.distribution(&Self::later_key(k, prev))
    }

    fn codebook_entries(&self) -> usize {
        self.v
    }
}

/// Builds a sample holding only frames, for predictor-level tests.
#[cfg(test)]
pub(crate) fn frames_only_sample(frames: Vec<FrameCodes>) -> TrainingSample {
    let t = frames.len();
    TrainingSample {
        instance_id: "test".into(),
        branch: super::Branch::Single,
        prefix: vec![0],
        espk_slot_index: 0,
        frames,
        c0_mask: (0..t).collect(),
        dec_mask: (0..t).collect(),
        txt_mask: Vec::new(),
        cot_mask: Vec::new(),
    }
}
