//! Full-batch gradient-descent fitting and the finite-difference gradient
//! oracle.

use super::model::{
    bind_params, build_objective, draw_noise, FhvaeConfig, ModuleParams, UttData,
};
use super::tape::Tape;
use crate::error::{Error, Result};
use crate::num::Real;
use crate::seqlayout::{LossReport, LossWeights};
use ndarray::{Array1, ArrayD};

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub epochs: usize,
    /// Fixed step size for plain gradient descent.
    pub step: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            epochs: 200,
            step: 1e-2,
            seed: 0,
        }
    }
}

fn validate_batch<F: Real>(batch: &[UttData<F>], cfg: &FhvaeConfig) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    for utt in batch {
        if utt.features.ncols() != cfg.n_bands {
            return Err(Error::DimensionMismatch {
                context: "fit features bands",
                expected: cfg.n_bands,
                got: utt.features.ncols(),
            });
        }
        if utt.h_cap.len() != cfg.cap_dim {
            return Err(Error::DimensionMismatch {
                context: "fit caption representation",
                expected: cfg.cap_dim,
                got: utt.h_cap.len(),
            });
        }
        if super::model::segment_row_ranges(utt.features.nrows(), cfg.seg_frames).is_empty() {
            return Err(Error::EmptyInput);
        }
    }
    Ok(())
}

/// Plain full-batch gradient descent from a seeded initialization;
/// deterministic per seed. Returns the fitted parameters and a per-epoch
/// loss history.
pub fn fit<F: Real>(
    batch: &[UttData<F>],
    cfg: FhvaeConfig,
    weights: &LossWeights<F>,
    opts: &FitOptions,
) -> Result<(ModuleParams<F>, Vec<LossReport<F>>)> {
    weights.validate()?;
    validate_batch(batch, &cfg)?;

    let mut params = ModuleParams::init(cfg, opts.seed);
    let mut history = Vec::with_capacity(opts.epochs);
    let step = F::from_f64_c(opts.step);

    // One noise draw per run: descent then minimizes a deterministic
    // objective, which keeps the per-epoch loss sequence monotone up to
    // step-size overshoot.
    let noise = draw_noise(&cfg, batch, opts.seed, 0);

    for epoch in 0..opts.epochs {
        let tape = Tape::new();
        let pv = bind_params(&tape, &params);
        let obj = build_objective(&tape, &pv, &cfg, batch, &noise, weights, None);

        let report = LossReport::variational(
            tape.scalar_value(obj.l_spk_lat),
            tape.scalar_value(obj.l_rec),
            tape.scalar_value(obj.l_kl_z2),
            tape.scalar_value(obj.l_kl_z1),
            weights,
        );
        if !report.all_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.push(report);

        let grads = tape.backward(obj.total);
        for i in 0..params.n_tensors() {
            if let Some(g) = grads.get(pv.vars[i]) {
                let mut t = params.tensor_mut(i);
                t.zip_mut_with(&g.to_owned(), |p, &gi| *p = *p - step * gi);
            }
        }
    }

    Ok((params, history))
}

/// Evaluates the objective at fixed noise with the speaker-latent target
/// pinned to `frozen_espk`.
fn eval_frozen<F: Real>(
    params: &ModuleParams<F>,
    batch: &[UttData<F>],
    weights: &LossWeights<F>,
    noise: &super::model::NoiseBundle<F>,
    frozen_espk: &[Array1<F>],
) -> F {
    let tape = Tape::new();
    let pv = bind_params(&tape, params);
    let obj = build_objective(
        &tape,
        &pv,
        &params.cfg,
        batch,
        noise,
        weights,
        Some(frozen_espk),
    );
    tape.scalar_value(obj.total)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_tensor: String,
    /// Largest |analytic gradient| flowing into the speaker encoder from the
    /// speaker-latent loss alone; exactly zero when the stop-gradient holds.
    pub stop_grad_max_abs: f64,
    pub n_checked: usize,
}

/// Compares analytic gradients of the full variational objective against
/// central finite differences on a deterministic subsample of coordinates
/// per tensor. The detached speaker target is frozen at the base point so
/// the finite-difference function matches the stop-gradient semantics.
pub fn grad_check<F: Real>(
    params: &ModuleParams<F>,
    batch: &[UttData<F>],
    weights: &LossWeights<F>,
    eps: f64,
    samples_per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    weights.validate()?;
    validate_batch(batch, &params.cfg)?;
    let cfg = params.cfg;
    let noise = draw_noise(&cfg, batch, seed, 0);

    // analytic gradients on the live objective (stop-gradient active)
    let tape = Tape::new();
    let pv = bind_params(&tape, params);
    let obj = build_objective(&tape, &pv, &cfg, batch, &noise, weights, None);
    let grads = tape.backward(obj.total);
    let frozen: Vec<Array1<F>> = obj.e_spk.iter().map(|&v| tape.vector_value(v)).collect();
    let analytic: Vec<ArrayD<F>> = (0..params.n_tensors())
        .map(|i| {
            grads
                .get(pv.vars[i])
                .map(|g| g.to_owned())
                .unwrap_or_else(|| ArrayD::zeros(params.tensor(i).raw_dim()))
        })
        .collect();

    let mut max_rel_err = 0.0f64;
    let mut worst_tensor = String::new();
    let mut n_checked = 0usize;
    let eps_f = F::from_f64_c(eps);

    for ti in 0..params.n_tensors() {
        let n = params.tensor(ti).len();
        for flat in sample_coords(n, samples_per_tensor) {
            let mut plus = params.clone();
            bump(&mut plus, ti, flat, eps_f);
            let mut minus = params.clone();
            bump(&mut minus, ti, flat, -eps_f);
            let f_plus = eval_frozen(&plus, batch, weights, &noise, &frozen)
                .to_f64()
                .unwrap();
            let f_minus = eval_frozen(&minus, batch, weights, &noise, &frozen)
                .to_f64()
                .unwrap();
            let fd = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic[ti].as_slice().expect("standard layout")[flat]
                .to_f64()
                .unwrap();
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            if rel > max_rel_err {
                max_rel_err = rel;
                worst_tensor = format!("{}[{flat}]", params.tensor_name(ti));
            }
            n_checked += 1;
        }
    }

    // stop-gradient path: with only the speaker-latent loss active, no
    // gradient may reach the speaker encoder
    let sg_weights = LossWeights {
        alpha: weights.alpha,
        lambda_spk: F::one(),
        lambda_rec: F::zero(),
        lambda_kl_z2: F::zero(),
        lambda_kl_z1: F::zero(),
    };
    let tape = Tape::new();
    let pv = bind_params(&tape, params);
    let obj = build_objective(&tape, &pv, &cfg, batch, &noise, &sg_weights, None);
    let grads = tape.backward(obj.total);
    let mut stop_grad_max_abs = 0.0f64;
    for i in 0..params.n_tensors() {
        if params.is_speaker_encoder_tensor(i) {
            if let Some(g) = grads.get(pv.vars[i]) {
                for v in g.iter() {
                    stop_grad_max_abs = stop_grad_max_abs.max(v.to_f64().unwrap().abs());
                }
            }
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        worst_tensor,
        stop_grad_max_abs,
        n_checked,
    })
}

fn bump<F: Real>(params: &mut ModuleParams<F>, tensor: usize, flat: usize, delta: F) {
    let mut view = params.tensor_mut(tensor);
    let slice = view.as_slice_mut().expect("standard layout");
    slice[flat] = slice[flat] + delta;
}

/// First, last, and evenly strided interior coordinates, at most `k`.
fn sample_coords(n: usize, k: usize) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    let mut out = vec![0, n - 1];
    let interior = k.saturating_sub(2);
    for i in 1..=interior {
        out.push(i * (n - 1) / (interior + 1));
    }
    out.sort_unstable();
    out.dedup();
    out
}
