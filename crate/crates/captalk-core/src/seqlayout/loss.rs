//! Loss arithmetic: the factorized frame negative log-likelihood and the
//! branch/base/total combinators.

use super::predictor::FramePredictor;
use super::{Branch, TrainingSample, N_CODEBOOKS};
use crate::error::{Error, Result};
use crate::num::Real;
use serde::{Deserialize, Serialize};

/// The trade-off and regularizer coefficients of the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights<F> {
    /// Trade-off between the first-codebook loss and the decoder loss.
    pub alpha: F,
    pub lambda_spk: F,
    pub lambda_rec: F,
    pub lambda_kl_z2: F,
    pub lambda_kl_z1: F,
}

impl<F: Real> Default for LossWeights<F> {
    fn default() -> Self {
        Self {
            alpha: F::from_f64_c(0.5),
            lambda_spk: F::one(),
            lambda_rec: F::one(),
            lambda_kl_z2: F::from_f64_c(0.01),
            lambda_kl_z1: F::from_f64_c(0.01),
        }
    }
}

impl<F: Real> LossWeights<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= F::zero() && self.alpha <= F::one()) {
            return Err(Error::Config(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        for (name, v) in [
            ("lambda_spk", self.lambda_spk),
            ("lambda_rec", self.lambda_rec),
            ("lambda_kl_z2", self.lambda_kl_z2),
            ("lambda_kl_z1", self.lambda_kl_z1),
        ] {
            if !(v >= F::zero() && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Every loss component plus the combined totals, mean-reduced, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport<F> {
    pub l_c0: F,
    pub l_dec: F,
    pub l_txt: F,
    pub l_cot: F,
    pub l_spk_lat: F,
    pub l_rec: F,
    pub l_kl_z2: F,
    pub l_kl_z1: F,
    pub base_total: F,
    pub grand_total: F,
}

impl<F: Real> LossReport<F> {
    /// Assembles the report from raw components, computing both totals.
    #[allow(clippy::too_many_arguments)]
    pub fn from_components(
        branch: Branch,
        l_c0: F,
        l_dec: F,
        l_txt: F,
        l_cot: F,
        l_spk_lat: F,
        l_rec: F,
        l_kl_z2: F,
        l_kl_z1: F,
        w: &LossWeights<F>,
    ) -> Self {
        let base_total = match branch {
            Branch::Single => base_loss_single(l_c0, l_dec, l_txt, w.alpha),
            Branch::Dialogue => base_loss_dialogue(l_c0, l_dec, l_txt, l_cot, w.alpha),
        };
        let grand_total = total_loss(base_total, l_spk_lat, l_rec, l_kl_z2, l_kl_z1, w);
        Self {
            l_c0,
            l_dec,
            l_txt,
            l_cot,
            l_spk_lat,
            l_rec,
            l_kl_z2,
            l_kl_z1,
            base_total,
            grand_total,
        }
    }

    /// A report carrying only the variational terms (the conditioning module
    /// trains without the token losses).
    pub fn variational(l_spk_lat: F, l_rec: F, l_kl_z2: F, l_kl_z1: F, w: &LossWeights<F>) -> Self {
        let zero = F::zero();
        Self::from_components(
            Branch::Single,
            zero,
            zero,
            zero,
            zero,
            l_spk_lat,
            l_rec,
            l_kl_z2,
            l_kl_z1,
            w,
        )
    }

    pub const CSV_HEADER: &'static str =
        "l_c0,l_dec,l_txt,l_cot,l_spk_lat,l_rec,l_kl_z2,l_kl_z1,base_total,grand_total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.l_c0,
            self.l_dec,
            self.l_txt,
            self.l_cot,
            self.l_spk_lat,
            self.l_rec,
            self.l_kl_z2,
            self.l_kl_z1,
            self.base_total,
            self.grand_total
        )
    }

    pub fn all_finite(&self) -> bool {
        [
            self.l_c0,
            self.l_dec,
            self.l_txt,
            self.l_cot,
            self.l_spk_lat,
            self.l_rec,
            self.l_kl_z2,
            self.l_kl_z1,
            self.base_total,
            self.grand_total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Base objective of the single branch:
/// `2·((1−α)·L_c0 + α·L_dec) + 0.01·L_txt`.
pub fn base_loss_single<F: Real>(l_c0: F, l_dec: F, l_txt: F, alpha: F) -> F {
    let two = F::from_f64_c(2.0);
    let txt_weight = F::from_f64_c(0.01);
    two * ((F::one() - alpha) * l_c0 + alpha * l_dec) + txt_weight * l_txt
}

/// Dialogue branch adds the control-token loss: `single + 2.0·L_cot`.
pub fn base_loss_dialogue<F: Real>(l_c0: F, l_dec: F, l_txt: F, l_cot: F, alpha: F) -> F {
    base_loss_single(l_c0, l_dec, l_txt, alpha) + F::from_f64_c(2.0) * l_cot
}

/// Final objective: base plus the weighted variational terms.
pub fn total_loss<F: Real>(
    base: F,
    l_spk_lat: F,
    l_rec: F,
    l_kl_z2: F,
    l_kl_z1: F,
    w: &LossWeights<F>,
) -> F {
    base + w.lambda_spk * l_spk_lat
        + w.lambda_rec * l_rec
        + w.lambda_kl_z2 * l_kl_z2
        + w.lambda_kl_z1 * l_kl_z1
}

/// Mean negative log-likelihood of the acoustic codes under a predictor:
/// the first-codebook loss over all frames, and the remaining-codebook loss
/// over the sampled frame subset.
pub fn frame_nll<F: Real, P: FramePredictor<F> + ?Sized>(
    p: &P,
    s: &TrainingSample,
) -> Result<(F, F)> {
    if s.dec_mask.is_empty() {
        return Err(Error::Layout("dec_mask must be populated".into()));
    }

    let mut c0_sum = F::zero();
    for t in 0..s.frames.len() {
        let dist = p.first_code(s, t);
        c0_sum += observed_nll(&dist, s.frames[t][0])?;
    }
    let l_c0 = c0_sum / F::from_f64_c(s.frames.len() as f64);

    let mut dec_sum = F::zero();
    for &t in &s.dec_mask {
        for k in 1..N_CODEBOOKS {
            let dist = p.later_code(s, t, k, &s.frames[t][..k]);
            dec_sum += observed_nll(&dist, s.frames[t][k])?;
        }
    }
    let l_dec = dec_sum / F::from_f64_c((s.dec_mask.len() * (N_CODEBOOKS - 1)) as f64);

    Ok((l_c0, l_dec))
}

fn observed_nll<F: Real>(dist: &[F], code: u16) -> Result<F> {
    let prob = dist.get(code as usize).copied().unwrap_or(F::zero());
    if prob <= F::zero() {
        return Err(Error::ImpossibleObservation);
    }
    Ok(-prob.ln())
}
