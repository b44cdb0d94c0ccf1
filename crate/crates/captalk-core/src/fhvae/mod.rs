//! Hierarchical variational timbre conditioning.
//!
//! An utterance-level speaker embedding from a pooling encoder defines the
//! prior mean of a pooled segment latent; KL regularization pulls the
//! segment posterior toward that utterance-conditioned prior while a
//! frame-level latent under a standard-normal prior carries the local
//! variation. A caption prediction head learns to produce the speaker
//! embedding from text alone, trained against the stop-gradient of the
//! reference embedding, which is what makes caption-guided and timbre-reuse
//! inference possible without reference audio.

pub mod fit;
pub mod generate;
pub mod model;
pub mod tape;

pub use fit::{fit, grad_check, FitOptions, GradCheckReport};
pub use generate::{caption_embedding, generate_features};
pub use model::{draw_noise, standardize_batch, FhvaeConfig, ModuleParams, NoiseBundle, UttData};
pub use model::{posterior_z1, posterior_z2, predict_espk, prior_mean, reconstruct, speaker_encode};
pub use tape::{Gradients, Tape, Var};

use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};
use crate::num::Real;
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Diagonal Gaussian given by mean and standard-deviation vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDiag<F> {
    mean: Array1<F>,
    scale: Array1<F>,
}

impl<F: Real> GaussianDiag<F> {
    pub fn new(mean: Array1<F>, scale: Array1<F>) -> Result<Self> {
        if mean.len() != scale.len() {
            return Err(Error::DimensionMismatch {
                context: "gaussian mean/scale",
                expected: mean.len(),
                got: scale.len(),
            });
        }
        if scale.iter().any(|s| !(*s > F::zero()) || !s.is_finite()) {
            return Err(Error::NonPositiveScale);
        }
        Ok(Self { mean, scale })
    }

    pub fn mean(&self) -> &Array1<F> {
        &self.mean
    }

    pub fn scale(&self) -> &Array1<F> {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Contiguous feature slice analyzed as one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment<F> {
    pub features: Array2<F>,
    /// Position within the utterance.
    pub index: usize,
}

impl<F: Real> Segment<F> {
    pub fn n_frames(&self) -> usize {
        self.features.nrows()
    }
}

/// Non-overlapping consecutive slices of `seg_frames`; the final remainder
/// is kept when it is at least half a segment, dropped otherwise.
pub fn split_segments<F: Real>(feats: &FeatureMatrix<F>, seg_frames: usize) -> Vec<Segment<F>> {
    assert!(seg_frames >= 1);
    let n = feats.n_frames();
    let mut out = Vec::new();
    let mut start = 0;
    let mut index = 0;
    while start + seg_frames <= n {
        out.push(Segment {
            features: feats.data().slice(ndarray::s![start..start + seg_frames, ..]).to_owned(),
            index,
        });
        start += seg_frames;
        index += 1;
    }
    let rem = n - start;
    if rem > 0 && 2 * rem >= seg_frames {
        out.push(Segment {
            features: feats.data().slice(ndarray::s![start.., ..]).to_owned(),
            index,
        });
    }
    out
}

/// Closed-form KL of a diagonal Gaussian against `N(prior_mean, I)`:
/// per dimension `0.5·(σ² + (μ−m)² − 1 − ln σ²)`, summed over dimensions.
pub fn kl_z2<F: Real>(q: &GaussianDiag<F>, prior_mean: &Array1<F>) -> Result<F> {
    if q.dim() != prior_mean.len() {
        return Err(Error::DimensionMismatch {
            context: "kl prior mean",
            expected: q.dim(),
            got: prior_mean.len(),
        });
    }
    let half = F::from_f64_c(0.5);
    let mut total = F::zero();
    for ((&mu, &sigma), &m) in q.mean.iter().zip(q.scale.iter()).zip(prior_mean.iter()) {
        let d = mu - m;
        total += half * (sigma * sigma + d * d - F::one()) - sigma.ln();
    }
    Ok(total)
}

/// KL against the standard normal prior.
pub fn kl_z1<F: Real>(q: &GaussianDiag<F>) -> F {
    let zeros = Array1::zeros(q.dim());
    kl_z2(q, &zeros).expect("dimensions match by construction")
}

/// `μ + σ ⊙ ε` with `ε` standard normal from the seeded generator.
pub fn reparam_sample<F: Real>(q: &GaussianDiag<F>, seed: u64) -> Array1<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    Array1::from_iter(q.mean.iter().zip(q.scale.iter()).map(|(&mu, &sigma)| {
        let eps: f64 = normal.sample(&mut rng);
        mu + sigma * F::from_f64_c(eps)
    }))
}

/// Mean squared error between two equal-shape feature blocks.
pub fn recon_loss<F: Real>(a: &Array2<F>, b: &Array2<F>) -> F {
    assert_eq!(a.dim(), b.dim(), "reconstruction shapes must match");
    let n = F::from_f64_c(a.len() as f64);
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(F::zero(), |acc, v| acc + v)
        / n
}

/// Squared Euclidean distance; the caption-prediction alignment loss.
pub fn spk_lat_loss<F: Real>(predicted: &Array1<F>, target: &Array1<F>) -> Result<F> {
    if predicted.len() != target.len() {
        return Err(Error::DimensionMismatch {
            context: "speaker latent loss",
            expected: target.len(),
            got: predicted.len(),
        });
    }
    Ok(predicted
        .iter()
        .zip(target.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .fold(F::zero(), |acc, v| acc + v))
}

/// All latents derived from one utterance under frozen parameters.
#[derive(Debug, Clone)]
pub struct LatentBundle<F> {
    pub e_spk: Array1<F>,
    pub mu_spk: Array1<F>,
    pub z2_posteriors: Vec<GaussianDiag<F>>,
    pub z2_samples: Vec<Array1<F>>,
    /// Flattened per-frame posterior (frames × d1 dimensions per segment).
    pub z1_posteriors: Vec<GaussianDiag<F>>,
    pub z1_samples: Vec<Array1<F>>,
}

/// Runs the frozen module over one utterance.
pub fn analyze_utterance<F: Real>(
    feats: &FeatureMatrix<F>,
    params: &ModuleParams<F>,
    seed: u64,
) -> Result<LatentBundle<F>> {
    let e_spk = model::speaker_encode(feats, params)?;
    let mu_spk = model::prior_mean(&e_spk, params)?;
    let segments = split_segments(feats, params.cfg.seg_frames);
    let mut z2_posteriors = Vec::new();
    let mut z2_samples = Vec::new();
    let mut z1_posteriors = Vec::new();
    let mut z1_samples = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        let q2 = model::posterior_z2(seg, params)?;
        let z2 = reparam_sample(&q2, crate::num::mix_seed(seed, &format!("z2:{i}")));
        let q1 = model::posterior_z1(seg, &z2, params)?;
        let z1 = reparam_sample(&q1, crate::num::mix_seed(seed, &format!("z1:{i}")));
        z2_posteriors.push(q2);
        z2_samples.push(z2);
        z1_posteriors.push(q1);
        z1_samples.push(z1);
    }
    Ok(LatentBundle {
        e_spk,
        mu_spk,
        z2_posteriors,
        z2_samples,
        z1_posteriors,
        z1_samples,
    })
}

/// Inference-time source of the speaker condition.
#[derive(Debug, Clone, Copy)]
pub enum SpeakerCondition<'a, F> {
    /// Predict a fresh embedding from a caption representation.
    Caption { h_cap: &'a Array1<F> },
    /// Reuse a previously obtained embedding unchanged.
    Reuse { e_spk: &'a Array1<F> },
}

/// Resolves the embedding to inject for the requested mode.
pub fn condition_espk<F: Real>(
    cond: SpeakerCondition<'_, F>,
    params: &ModuleParams<F>,
) -> Result<Array1<F>> {
    match cond {
        SpeakerCondition::Caption { h_cap } => model::predict_espk(h_cap, params),
        SpeakerCondition::Reuse { e_spk } => Ok(e_spk.clone()),
    }
}

/// Monte Carlo KL estimate used as the oracle for the closed form:
/// `E_q[ln q(z) − ln p(z)]` with `p = N(prior_mean, I)`.
pub fn kl_monte_carlo<F: Real>(
    q: &GaussianDiag<F>,
    prior_mean: &Array1<F>,
    n_samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let d = q.dim();
    let mut acc = 0.0f64;
    for _ in 0..n_samples {
        let mut log_q = 0.0;
        let mut log_p = 0.0;
        for i in 0..d {
            let eps: f64 = normal.sample(&mut rng);
            let sigma = q.scale[i].to_f64().unwrap();
            let mu = q.mean[i].to_f64().unwrap();
            let z = mu + sigma * eps;
            // ln N(z; mu, sigma) and ln N(z; m, 1), constants cancel in the
            // difference except for ln sigma
            log_q += -0.5 * eps * eps - sigma.ln();
            let dp = z - prior_mean[i].to_f64().unwrap();
            log_p += -0.5 * dp * dp;
        }
        acc += log_q - log_p;
    }
    acc / n_samples as f64
}

/// Per-band mean over frames (used by callers that need plain pooling).
pub fn pool_features<F: Real>(feats: &Array2<F>) -> Array1<F> {
    tape::pooled_mean(&feats.view())
}

/// Mean distance between segment posterior means and the utterance prior
/// mean; the quantity the z2 KL term pulls down.
pub fn mean_z2_prior_distance<F: Real>(
    bundles: &[LatentBundle<F>],
) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for b in bundles {
        for q in &b.z2_posteriors {
            let d: f64 = q
                .mean()
                .iter()
                .zip(b.mu_spk.iter())
                .map(|(&a, &m)| {
                    let d = (a - m).to_f64().unwrap();
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            total += d;
            count += 1;
        }
    }
    total / count.max(1) as f64
}
