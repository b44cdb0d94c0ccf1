//! Caption representations and toy feature generation for the timbre-reuse
//! analysis.
//!
//! The caption representation stands in for backbone hidden states: the
//! mean of per-character embeddings drawn once from a fixed seeded table.
//! Generation runs the fitted decoder with `z2` at the speaker-conditioned
//! prior mean and fresh standard-normal `z1` per frame, which is exactly
//! the module's inference path for a designed voice.

use super::model::{predict_espk, prior_mean, reconstruct, ModuleParams};
use crate::dsp::FeatureMatrix;
use crate::error::Result;
use crate::num::{mix_seed, Real};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Mean of fixed per-character embeddings; deterministic in
/// `(caption, cap_dim, seed)`. An empty caption maps to the zero vector.
pub fn caption_embedding<F: Real>(caption: &str, cap_dim: usize, seed: u64) -> Array1<F> {
    let mut acc = vec![0.0f64; cap_dim];
    let mut count = 0usize;
    for c in caption.chars() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &format!("cap-embed:{}", c as u32)));
        let normal = StandardNormal;
        for slot in acc.iter_mut() {
            let e: f64 = normal.sample(&mut rng);
            *slot += e;
        }
        count += 1;
    }
    if count > 0 {
        for slot in acc.iter_mut() {
            *slot /= count as f64;
        }
    }
    Array1::from_iter(acc.into_iter().map(F::from_f64_c))
}

/// Adds seeded Gaussian noise to a caption representation (per-utterance
/// resampling of the designed voice).
pub fn perturb_caption<F: Real>(h_cap: &Array1<F>, sigma: f64, seed: u64) -> Array1<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    h_cap.mapv(|v| {
        let e: f64 = normal.sample(&mut rng);
        v + F::from_f64_c(sigma * e)
    })
}

/// Synthesizes utterance features from a speaker embedding: `z2` fixed at
/// the conditioned prior mean, `z1` drawn fresh per frame.
pub fn generate_features<F: Real>(
    params: &ModuleParams<F>,
    e_spk: &Array1<F>,
    n_segments: usize,
    seed: u64,
) -> Result<FeatureMatrix<F>> {
    let cfg = &params.cfg;
    let z2 = prior_mean(e_spk, params)?;
    let mut rows = Array2::zeros((n_segments * cfg.seg_frames, cfg.n_bands));
    for seg in 0..n_segments {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &format!("gen-z1:{seg}")));
        let normal = StandardNormal;
        let z1 = Array2::from_shape_fn((cfg.seg_frames, cfg.d1), |_| {
            let e: f64 = normal.sample(&mut rng);
            F::from_f64_c(e)
        });
        let block = reconstruct(&z1, &z2, params)?;
        rows.slice_mut(ndarray::s![
            seg * cfg.seg_frames..(seg + 1) * cfg.seg_frames,
            ..
        ])
        .assign(&block);
    }
    Ok(FeatureMatrix::new(rows))
}

/// Generation settings for the timbre-reuse comparison.
#[derive(Debug, Clone, Copy)]
pub struct ReuseRunConfig {
    pub n_utterances: usize,
    pub segments_per_utterance: usize,
    /// Noise added to the caption representation in the resampled mode.
    pub caption_noise: f64,
}

impl Default for ReuseRunConfig {
    fn default() -> Self {
        Self {
            n_utterances: 8,
            segments_per_utterance: 4,
            caption_noise: 1.0,
        }
    }
}

/// Generates the two utterance sets contrasted by the timbre-reuse report:
/// fixed mode predicts the speaker embedding once from the caption and
/// reuses it; resampled mode re-predicts from freshly perturbed captions
/// per utterance.
pub fn reuse_experiment<F: Real>(
    params: &ModuleParams<F>,
    h_cap: &Array1<F>,
    run: &ReuseRunConfig,
    seed: u64,
) -> Result<(Vec<FeatureMatrix<F>>, Vec<FeatureMatrix<F>>)> {
    let fixed_espk = predict_espk(h_cap, params)?;
    let mut fixed = Vec::with_capacity(run.n_utterances);
    let mut resampled = Vec::with_capacity(run.n_utterances);
    for u in 0..run.n_utterances {
        fixed.push(generate_features(
            params,
            &fixed_espk,
            run.segments_per_utterance,
            mix_seed(seed, &format!("fixed:{u}")),
        )?);

        let h_u = perturb_caption(h_cap, run.caption_noise, mix_seed(seed, &format!("cap:{u}")));
        let espk_u = predict_espk(&h_u, params)?;
        resampled.push(generate_features(
            params,
            &espk_u,
            run.segments_per_utterance,
            mix_seed(seed, &format!("resampled:{u}")),
        )?);
    }
    Ok((fixed, resampled))
}
