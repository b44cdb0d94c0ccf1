//! Module parameters and the objective graph.
//!
//! Networks, all small MLPs over pooled features:
//! - speaker encoder: mean-pool over frames, then two layers → `e_spk`
//! - prior projection: affine `e_spk → μ_spk`
//! - z2 encoder: mean-pool over the segment → (mean, scale)
//! - z1 encoder: per frame, on `[frame ‖ z2]` → (mean, scale)
//! - decoder: per frame, on `[z1 ‖ z2]` → reconstructed frame
//! - caption head: two layers over the caption representation → `ê_spk`
//!
//! The same graph builder serves training, gradient checking, and the
//! frozen inference entry points, so there is exactly one definition of
//! every forward computation.

use super::tape::{pooled_mean, Tape, Var};
use super::{GaussianDiag, Segment};
use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};
use crate::num::{mix_seed, Real};
use crate::seqlayout::LossWeights;
use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::{Read, Write};
use std::path::Path;

/// Dimensions and numeric knobs of the conditioning module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FhvaeConfig {
    pub n_bands: usize,
    pub d_spk: usize,
    pub d2: usize,
    pub d1: usize,
    pub seg_frames: usize,
    pub hidden: usize,
    pub cap_dim: usize,
    pub scale_floor: f64,
}

impl Default for FhvaeConfig {
    fn default() -> Self {
        Self {
            n_bands: 40,
            d_spk: 64,
            d2: 32,
            d1: 32,
            seg_frames: 20,
            hidden: 64,
            cap_dim: 32,
            scale_floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Real> Affine<F> {
    fn init(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Self {
        let bound = 1.0 / (cols as f64).sqrt();
        let w = Array2::from_shape_fn((rows, cols), |_| {
            F::from_f64_c(rng.random_range(-bound..bound))
        });
        let b = Array1::zeros(rows);
        Self { w, b }
    }

    pub fn apply(&self, x: &Array1<F>) -> Array1<F> {
        self.w.dot(x) + &self.b
    }
}

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleParams<F> {
    pub cfg: FhvaeConfig,
    pub spk_l1: Affine<F>,
    pub spk_l2: Affine<F>,
    pub z2_l1: Affine<F>,
    pub z2_mu: Affine<F>,
    pub z2_sigma: Affine<F>,
    pub z1_l1: Affine<F>,
    pub z1_mu: Affine<F>,
    pub z1_sigma: Affine<F>,
    pub dec_l1: Affine<F>,
    pub dec_out: Affine<F>,
    pub prior_proj: Affine<F>,
    pub cap_l1: Affine<F>,
    pub cap_out: Affine<F>,
}

/// `(name, affine)` accessor pairs in the canonical tensor order.
macro_rules! affine_list {
    ($self:ident, $($field:ident),+) => {
        vec![$((stringify!($field), &$self.$field)),+]
    };
}

macro_rules! affine_list_mut {
    ($self:ident, $($field:ident),+) => {
        vec![$((stringify!($field), &mut $self.$field)),+]
    };
}

impl<F: Real> ModuleParams<F> {
    /// Deterministic seeded initialization.
    pub fn init(cfg: FhvaeConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, "module-init"));
        let h = cfg.hidden;
        Self {
            cfg,
            spk_l1: Affine::init(&mut rng, h, cfg.n_bands),
            spk_l2: Affine::init(&mut rng, cfg.d_spk, h),
            z2_l1: Affine::init(&mut rng, h, cfg.n_bands),
            z2_mu: Affine::init(&mut rng, cfg.d2, h),
            z2_sigma: Affine::init(&mut rng, cfg.d2, h),
            z1_l1: Affine::init(&mut rng, h, cfg.n_bands + cfg.d2),
            z1_mu: Affine::init(&mut rng, cfg.d1, h),
            z1_sigma: Affine::init(&mut rng, cfg.d1, h),
            dec_l1: Affine::init(&mut rng, h, cfg.d1 + cfg.d2),
            dec_out: Affine::init(&mut rng, cfg.n_bands, h),
            prior_proj: Affine::init(&mut rng, cfg.d2, cfg.d_spk),
            cap_l1: Affine::init(&mut rng, h, cfg.cap_dim),
            cap_out: Affine::init(&mut rng, cfg.d_spk, h),
        }
    }

    fn affines(&self) -> Vec<(&'static str, &Affine<F>)> {
        affine_list!(
            self, spk_l1, spk_l2, z2_l1, z2_mu, z2_sigma, z1_l1, z1_mu, z1_sigma, dec_l1,
            dec_out, prior_proj, cap_l1, cap_out
        )
    }

    fn affines_mut(&mut self) -> Vec<(&'static str, &mut Affine<F>)> {
        affine_list_mut!(
            self, spk_l1, spk_l2, z2_l1, z2_mu, z2_sigma, z1_l1, z1_mu, z1_sigma, dec_l1,
            dec_out, prior_proj, cap_l1, cap_out
        )
    }

    pub fn n_tensors(&self) -> usize {
        self.affines().len() * 2
    }

    pub fn tensor_name(&self, idx: usize) -> String {
        let (name, _) = self.affines()[idx / 2];
        format!("{}.{}", name, if idx % 2 == 0 { "w" } else { "b" })
    }

    pub fn tensor(&self, idx: usize) -> ArrayViewD<'_, F> {
        let list = self.affines();
        let (_, aff) = list[idx / 2];
        if idx % 2 == 0 {
            aff.w.view().into_dyn()
        } else {
            aff.b.view().into_dyn()
        }
    }

    pub fn tensor_mut(&mut self, idx: usize) -> ArrayViewMutD<'_, F> {
        let is_w = idx % 2 == 0;
        let slot = idx / 2;
        let mut list = self.affines_mut();
        let (_, aff) = list.swap_remove(slot);
        if is_w {
            aff.w.view_mut().into_dyn()
        } else {
            aff.b.view_mut().into_dyn()
        }
    }

    /// Does the tensor belong to the speaker encoder? (The stop-gradient
    /// assertion targets exactly these.)
    pub fn is_speaker_encoder_tensor(&self, idx: usize) -> bool {
        matches!(self.affines()[idx / 2].0, "spk_l1" | "spk_l2")
    }

    /// Named-tensor persistence: a little-endian u64 header length, a JSON
    /// header listing names and shapes, then row-major doubles in order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let names: Vec<serde_json::Value> = (0..self.n_tensors())
            .map(|i| {
                serde_json::json!({
                    "name": self.tensor_name(i),
                    "shape": self.tensor(i).shape().to_vec(),
                })
            })
            .collect();
        let header = serde_json::json!({
            "tensors": names,
            "dims": {
                "n_bands": self.cfg.n_bands,
                "d_spk": self.cfg.d_spk,
                "d2": self.cfg.d2,
                "d1": self.cfg.d1,
                "seg_frames": self.cfg.seg_frames,
                "hidden": self.cfg.hidden,
                "cap_dim": self.cfg.cap_dim,
                "scale_floor": self.cfg.scale_floor,
            },
        });
        let header_bytes = serde_json::to_vec(&header)?;
        let mut file = std::fs::File::create(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        file.write_all(&(header_bytes.len() as u64).to_le_bytes())
            .and_then(|_| file.write_all(&header_bytes))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        for i in 0..self.n_tensors() {
            for v in self.tensor(i).iter() {
                file.write_all(&v.to_f64().unwrap().to_le_bytes())
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = std::fs::File::open(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut len_bytes = [0u8; 8];
        file.read_exact(&mut len_bytes)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let mut header_bytes = vec![0u8; header_len];
        file.read_exact(&mut header_bytes)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let header: serde_json::Value = serde_json::from_slice(&header_bytes)?;
        let dims = &header["dims"];
        let as_usize = |key: &str| -> Result<usize> {
            dims[key]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::ParamsFile(format!("missing dim {key}")))
        };
        let cfg = FhvaeConfig {
            n_bands: as_usize("n_bands")?,
            d_spk: as_usize("d_spk")?,
            d2: as_usize("d2")?,
            d1: as_usize("d1")?,
            seg_frames: as_usize("seg_frames")?,
            hidden: as_usize("hidden")?,
            cap_dim: as_usize("cap_dim")?,
            scale_floor: dims["scale_floor"]
                .as_f64()
                .ok_or_else(|| Error::ParamsFile("missing scale_floor".into()))?,
        };
        let mut params = Self::init(cfg, 0);
        let tensors = header["tensors"]
            .as_array()
            .ok_or_else(|| Error::ParamsFile("missing tensor list".into()))?;
        if tensors.len() != params.n_tensors() {
            return Err(Error::ParamsFile(format!(
                "expected {} tensors, file has {}",
                params.n_tensors(),
                tensors.len()
            )));
        }
        for (i, meta) in tensors.iter().enumerate() {
            let name = meta["name"].as_str().unwrap_or_default();
            if name != params.tensor_name(i) {
                return Err(Error::ParamsFile(format!(
                    "tensor {i} is {:?}, expected {:?}",
                    name,
                    params.tensor_name(i)
                )));
            }
            let mut view = params.tensor_mut(i);
            for v in view.iter_mut() {
                let mut buf = [0u8; 8];
                file.read_exact(&mut buf)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                *v = F::from_f64_c(f64::from_le_bytes(buf));
            }
        }
        Ok(params)
    }
}

// ---- frozen inference entry points -------------------------------------

/// Mean over frames, then the two-layer perceptron.
pub fn speaker_encode<F: Real>(
    feats: &FeatureMatrix<F>,
    p: &ModuleParams<F>,
) -> Result<Array1<F>> {
    if feats.n_frames() == 0 {
        return Err(Error::EmptyInput);
    }
    if feats.n_bands() != p.cfg.n_bands {
        return Err(Error::DimensionMismatch {
            context: "speaker encoder input bands",
            expected: p.cfg.n_bands,
            got: feats.n_bands(),
        });
    }
    let pooled = pooled_mean(&feats.data().view());
    let h = p.spk_l1.apply(&pooled).mapv(|v| v.tanh());
    Ok(p.spk_l2.apply(&h))
}

/// `μ_spk`, the prior mean for the pooled segment latent.
pub fn prior_mean<F: Real>(e_spk: &Array1<F>, p: &ModuleParams<F>) -> Result<Array1<F>> {
    if e_spk.len() != p.cfg.d_spk {
        return Err(Error::DimensionMismatch {
            context: "prior projection input",
            expected: p.cfg.d_spk,
            got: e_spk.len(),
        });
    }
    Ok(p.prior_proj.apply(e_spk))
}

fn positive_scale<F: Real>(pre: Array1<F>, floor: f64) -> Array1<F> {
    let floor = F::from_f64_c(floor);
    pre.mapv(|x| {
        let sp = if x > F::zero() {
            x + (F::one() + (-x).exp()).ln()
        } else {
            (F::one() + x.exp()).ln()
        };
        sp + floor
    })
}

/// Pooled segment features through the z2 encoder.
pub fn posterior_z2<F: Real>(seg: &Segment<F>, p: &ModuleParams<F>) -> Result<GaussianDiag<F>> {
    if seg.features.ncols() != p.cfg.n_bands {
        return Err(Error::DimensionMismatch {
            context: "z2 encoder input bands",
            expected: p.cfg.n_bands,
            got: seg.features.ncols(),
        });
    }
    let pooled = pooled_mean(&seg.features.view());
    let h = p.z2_l1.apply(&pooled).mapv(|v| v.tanh());
    GaussianDiag::new(
        p.z2_mu.apply(&h),
        positive_scale(p.z2_sigma.apply(&h), p.cfg.scale_floor),
    )
}

/// Per-frame z1 posterior conditioned on the segment frame and the z2
/// sample, returned flattened as one diagonal Gaussian of dimension
/// `frames × d1`.
pub fn posterior_z1<F: Real>(
    seg: &Segment<F>,
    z2: &Array1<F>,
    p: &ModuleParams<F>,
) -> Result<GaussianDiag<F>> {
    if z2.len() != p.cfg.d2 {
        return Err(Error::DimensionMismatch {
            context: "z1 encoder z2 input",
            expected: p.cfg.d2,
            got: z2.len(),
        });
    }
    let frames = seg.n_frames();
    let mut mean = Array1::zeros(frames * p.cfg.d1);
    let mut scale = Array1::zeros(frames * p.cfg.d1);
    for f in 0..frames {
        let mut input = Array1::zeros(p.cfg.n_bands + p.cfg.d2);
        input
            .slice_mut(ndarray::s![..p.cfg.n_bands])
            .assign(&seg.features.row(f));
        input.slice_mut(ndarray::s![p.cfg.n_bands..]).assign(z2);
        let h = p.z1_l1.apply(&input).mapv(|v| v.tanh());
        let mu = p.z1_mu.apply(&h);
        let sg = positive_scale(p.z1_sigma.apply(&h), p.cfg.scale_floor);
        mean.slice_mut(ndarray::s![f * p.cfg.d1..(f + 1) * p.cfg.d1])
            .assign(&mu);
        scale
            .slice_mut(ndarray::s![f * p.cfg.d1..(f + 1) * p.cfg.d1])
            .assign(&sg);
    }
    GaussianDiag::new(mean, scale)
}

/// Decodes per-frame latents (rows of `z1`) with the broadcast z2 into a
/// segment feature block.
pub fn reconstruct<F: Real>(
    z1: &Array2<F>,
    z2: &Array1<F>,
    p: &ModuleParams<F>,
) -> Result<Array2<F>> {
    if z1.ncols() != p.cfg.d1 {
        return Err(Error::DimensionMismatch {
            context: "decoder z1 input",
            expected: p.cfg.d1,
            got: z1.ncols(),
        });
    }
    if z2.len() != p.cfg.d2 {
        return Err(Error::DimensionMismatch {
            context: "decoder z2 input",
            expected: p.cfg.d2,
            got: z2.len(),
        });
    }
    let mut out = Array2::zeros((z1.nrows(), p.cfg.n_bands));
    for f in 0..z1.nrows() {
        let mut input = Array1::zeros(p.cfg.d1 + p.cfg.d2);
        input.slice_mut(ndarray::s![..p.cfg.d1]).assign(&z1.row(f));
        input.slice_mut(ndarray::s![p.cfg.d1..]).assign(z2);
        let h = p.dec_l1.apply(&input).mapv(|v| v.tanh());
        out.row_mut(f).assign(&p.dec_out.apply(&h));
    }
    Ok(out)
}

/// `ê_spk = f_ψ(h_cap)`, the caption prediction head.
pub fn predict_espk<F: Real>(h_cap: &Array1<F>, p: &ModuleParams<F>) -> Result<Array1<F>> {
    if h_cap.len() != p.cfg.cap_dim {
        return Err(Error::DimensionMismatch {
            context: "caption head input",
            expected: p.cfg.cap_dim,
            got: h_cap.len(),
        });
    }
    let h = p.cap_l1.apply(h_cap).mapv(|v| v.tanh());
    Ok(p.cap_out.apply(&h))
}

// ---- objective graph ----------------------------------------------------

/// One training utterance: its feature matrix and caption representation.
#[derive(Debug, Clone)]
pub struct UttData<F> {
    pub features: Array2<F>,
    pub h_cap: Array1<F>,
}

/// Standardizes every utterance in place with per-band mean and standard
/// deviation pooled over the whole batch, returning the constants. Raw
/// log-mel energies span tens of nats; the small tanh networks need inputs
/// and regression targets near unit scale.
pub fn standardize_batch<F: Real>(batch: &mut [UttData<F>]) -> (Array1<F>, Array1<F>) {
    let bands = batch.first().map(|u| u.features.ncols()).unwrap_or(0);
    let mut count = 0usize;
    let mut mean = Array1::<F>::zeros(bands);
    for utt in batch.iter() {
        for row in utt.features.rows() {
            mean = mean + &row;
            count += 1;
        }
    }
    let n = F::from_f64_c(count.max(1) as f64);
    mean = mean.mapv(|v| v / n);

    let mut var = Array1::<F>::zeros(bands);
    for utt in batch.iter() {
        for row in utt.features.rows() {
            let d = &row - &mean;
            var = var + &d.mapv(|v| v * v);
        }
    }
    let floor = F::from_f64_c(1e-6);
    let std = var.mapv(|v| (v / n).sqrt().max(floor));

    for utt in batch.iter_mut() {
        for mut row in utt.features.rows_mut() {
            let standardized = (&row - &mean) / &std;
            row.assign(&standardized);
        }
    }
    (mean, std)
}

/// All reparameterization noise for one pass, drawn up front so training,
/// gradient checking, and finite differences share the exact same draw.
#[derive(Debug, Clone)]
pub struct NoiseBundle<F> {
    pub per_utt: Vec<UttNoise<F>>,
}

#[derive(Debug, Clone)]
pub struct UttNoise<F> {
    /// One ε per segment for z2.
    pub z2: Vec<Array1<F>>,
    /// One ε matrix (frames × d1) per segment for z1.
    pub z1: Vec<Array2<F>>,
}

/// Draws the epoch's noise; deterministic in (seed, epoch, batch shape).
pub fn draw_noise<F: Real>(
    cfg: &FhvaeConfig,
    batch: &[UttData<F>],
    seed: u64,
    epoch: usize,
) -> NoiseBundle<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &format!("noise:{epoch}")));
    let normal = StandardNormal;
    let mut draw = |n: usize| -> Vec<F> {
        (0..n)
            .map(|_| {
                let e: f64 = normal.sample(&mut rng);
                F::from_f64_c(e)
            })
            .collect()
    };
    let per_utt = batch
        .iter()
        .map(|utt| {
            let segs = segment_row_ranges(utt.features.nrows(), cfg.seg_frames);
            let mut z2 = Vec::new();
            let mut z1 = Vec::new();
            for (start, end) in segs {
                let frames = end - start;
                z2.push(Array1::from_vec(draw(cfg.d2)));
                z1.push(Array2::from_shape_vec((frames, cfg.d1), draw(frames * cfg.d1)).unwrap());
            }
            UttNoise { z2, z1 }
        })
        .collect();
    NoiseBundle { per_utt }
}

/// Row ranges of the segments of an utterance (same rule as
/// [`super::split_segments`]).
pub fn segment_row_ranges(n_frames: usize, seg_frames: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start + seg_frames <= n_frames {
        out.push((start, start + seg_frames));
        start += seg_frames;
    }
    let rem = n_frames - start;
    if rem > 0 && 2 * rem >= seg_frames {
        out.push((start, n_frames));
    }
    out
}

/// Parameter leaves bound into a tape, in tensor order.
pub struct ParamVars {
    pub vars: Vec<Var>,
}

pub fn bind_params<F: Real>(tape: &Tape<F>, p: &ModuleParams<F>) -> ParamVars {
    let vars = (0..p.n_tensors())
        .map(|i| tape.leaf(p.tensor(i).to_owned()))
        .collect();
    ParamVars { vars }
}

impl ParamVars {
    fn affine(&self, slot: usize) -> (Var, Var) {
        (self.vars[slot * 2], self.vars[slot * 2 + 1])
    }
}

// Affine slots in the canonical order (see `ModuleParams::affines`).
const SPK_L1: usize = 0;
const SPK_L2: usize = 1;
const Z2_L1: usize = 2;
const Z2_MU: usize = 3;
const Z2_SIGMA: usize = 4;
const Z1_L1: usize = 5;
const Z1_MU: usize = 6;
const Z1_SIGMA: usize = 7;
const DEC_L1: usize = 8;
const DEC_OUT: usize = 9;
const PRIOR_PROJ: usize = 10;
const CAP_L1: usize = 11;
const CAP_OUT: usize = 12;

fn affine_fwd<F: Real>(tape: &Tape<F>, pv: &ParamVars, slot: usize, x: Var) -> Var {
    let (w, b) = pv.affine(slot);
    tape.add(tape.matvec(w, x), b)
}

/// Closed-form KL node: `Σ_i 0.5σ² + 0.5(μ−m)² − lnσ − 0.5`.
fn kl_node<F: Real>(tape: &Tape<F>, mu: Var, scale: Var, prior_mean: Option<Var>) -> Var {
    let half = F::from_f64_c(0.5);
    let s2 = tape.scale(tape.square(scale), half);
    let diff = match prior_mean {
        Some(m) => tape.sub(mu, m),
        None => mu,
    };
    let d2 = tape.scale(tape.square(diff), half);
    let neg_ln = tape.scale(tape.ln(scale), -F::one());
    let per_dim = tape.offset(tape.add(tape.add(s2, d2), neg_ln), -half);
    tape.sum_all(per_dim)
}

/// Scalar loss nodes of the variational objective over one batch.
pub struct ObjectiveVars {
    pub total: Var,
    pub l_spk_lat: Var,
    pub l_rec: Var,
    pub l_kl_z2: Var,
    pub l_kl_z1: Var,
    /// `e_spk` node per utterance (for freezing and diagnostics).
    pub e_spk: Vec<Var>,
}

/// Builds the variational objective for a batch. When `frozen_espk` is
/// given, the speaker-latent target uses those constants instead of the
/// stop-gradient of the live encoder output — finite differencing needs the
/// detached branch pinned to the base point.
pub fn build_objective<F: Real>(
    tape: &Tape<F>,
    pv: &ParamVars,
    cfg: &FhvaeConfig,
    batch: &[UttData<F>],
    noise: &NoiseBundle<F>,
    weights: &LossWeights<F>,
    frozen_espk: Option<&[Array1<F>]>,
) -> ObjectiveVars {
    assert_eq!(batch.len(), noise.per_utt.len(), "noise bundle shape");
    let scale_floor = F::from_f64_c(cfg.scale_floor);
    let mut spk_terms = Vec::new();
    let mut rec_terms = Vec::new();
    let mut kl2_terms = Vec::new();
    let mut kl1_terms = Vec::new();
    let mut e_spk_nodes = Vec::new();

    for (u, utt) in batch.iter().enumerate() {
        let feats = tape.leaf_matrix(utt.features.clone());
        let pooled = tape.mean_rows(feats);
        let spk_h = tape.tanh(affine_fwd(tape, pv, SPK_L1, pooled));
        let e_spk = affine_fwd(tape, pv, SPK_L2, spk_h);
        e_spk_nodes.push(e_spk);
        let mu_spk = affine_fwd(tape, pv, PRIOR_PROJ, e_spk);

        let ranges = segment_row_ranges(utt.features.nrows(), cfg.seg_frames);
        let mut seg_rec = Vec::new();
        let mut seg_kl2 = Vec::new();
        let mut seg_kl1 = Vec::new();

        for (m, &(start, end)) in ranges.iter().enumerate() {
            let seg_view = utt.features.slice(ndarray::s![start..end, ..]);
            let seg = tape.leaf_matrix(seg_view.to_owned());
            let seg_pooled = tape.mean_rows(seg);
            let h2 = tape.tanh(affine_fwd(tape, pv, Z2_L1, seg_pooled));
            let mu2 = affine_fwd(tape, pv, Z2_MU, h2);
            let s2 = tape.softplus_floor(affine_fwd(tape, pv, Z2_SIGMA, h2), scale_floor);
            let eps2 = tape.leaf_vector(noise.per_utt[u].z2[m].clone());
            let z2 = tape.add(mu2, tape.mul(s2, eps2));
            seg_kl2.push(kl_node(tape, mu2, s2, Some(mu_spk)));

            let frames = end - start;
            let mut frame_err = Vec::with_capacity(frames);
            let mut frame_kl1 = Vec::with_capacity(frames);
            for f in 0..frames {
                let x_f = tape.leaf_vector(seg_view.row(f).to_owned());
                let enc_in = tape.concat(x_f, z2);
                let h1 = tape.tanh(affine_fwd(tape, pv, Z1_L1, enc_in));
                let mu1 = affine_fwd(tape, pv, Z1_MU, h1);
                let s1 = tape.softplus_floor(affine_fwd(tape, pv, Z1_SIGMA, h1), scale_floor);
                let eps1 = tape.leaf_vector(noise.per_utt[u].z1[m].row(f).to_owned());
                let z1 = tape.add(mu1, tape.mul(s1, eps1));
                frame_kl1.push(kl_node(tape, mu1, s1, None));

                let dec_in = tape.concat(z1, z2);
                let hd = tape.tanh(affine_fwd(tape, pv, DEC_L1, dec_in));
                let xhat = affine_fwd(tape, pv, DEC_OUT, hd);
                frame_err.push(tape.sum_all(tape.square(tape.sub(xhat, x_f))));
            }
            // mean squared error over the segment block
            let err_sum = frame_err
                .into_iter()
                .reduce(|a, b| tape.add(a, b))
                .expect("segment has frames");
            seg_rec.push(tape.scale(
                err_sum,
                F::one() / F::from_f64_c((frames * cfg.n_bands) as f64),
            ));
            // joint per-frame KL: sum over frames
            let kl1_sum = frame_kl1
                .into_iter()
                .reduce(|a, b| tape.add(a, b))
                .expect("segment has frames");
            seg_kl1.push(kl1_sum);
        }

        rec_terms.push(tape.mean_of(&seg_rec));
        kl2_terms.push(tape.mean_of(&seg_kl2));
        kl1_terms.push(tape.mean_of(&seg_kl1));

        let h_cap = tape.leaf_vector(utt.h_cap.clone());
        let cap_h = tape.tanh(affine_fwd(tape, pv, CAP_L1, h_cap));
        let e_hat = affine_fwd(tape, pv, CAP_OUT, cap_h);
        let target = match frozen_espk {
            Some(frozen) => tape.leaf_vector(frozen[u].clone()),
            None => tape.stop_grad(e_spk),
        };
        spk_terms.push(tape.sum_all(tape.square(tape.sub(e_hat, target))));
    }

    let l_spk_lat = tape.mean_of(&spk_terms);
    let l_rec = tape.mean_of(&rec_terms);
    let l_kl_z2 = tape.mean_of(&kl2_terms);
    let l_kl_z1 = tape.mean_of(&kl1_terms);

    let weighted = [
        tape.scale(l_spk_lat, weights.lambda_spk),
        tape.scale(l_rec, weights.lambda_rec),
        tape.scale(l_kl_z2, weights.lambda_kl_z2),
        tape.scale(l_kl_z1, weights.lambda_kl_z1),
    ];
    let total = weighted
        .into_iter()
        .reduce(|a, b| tape.add(a, b))
        .expect("four terms");

    ObjectiveVars {
        total,
        l_spk_lat,
        l_rec,
        l_kl_z2,
        l_kl_z1,
        e_spk: e_spk_nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fhvae::{kl_z2 as kl_closed, posterior_z2, split_segments, GaussianDiag};
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    fn tiny_cfg() -> FhvaeConfig {
        FhvaeConfig {
            n_bands: 4,
            d_spk: 3,
            d2: 2,
            d1: 2,
            seg_frames: 3,
            hidden: 5,
            cap_dim: 3,
            scale_floor: 1e-4,
        }
    }

    fn feature_matrix(frames: usize, bands: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((frames, bands), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn speaker_encode_pools_then_projects() {
        let cfg = FhvaeConfig {
            n_bands: 2,
            ..tiny_cfg()
        };
        let p = ModuleParams::<f64>::init(cfg, 1);
        let feats = FeatureMatrix::new(arr2(&[[1.0, 1.0], [3.0, 3.0]]));
        let e = speaker_encode(&feats, &p).unwrap();
        // pooled vector is [2,2]; compare against the hand-applied layers
        let pooled = ndarray::arr1(&[2.0, 2.0]);
        let expected = p.spk_l2.apply(&p.spk_l1.apply(&pooled).mapv(f64::tanh));
        assert_eq!(e, expected);
        assert_eq!(e.len(), cfg.d_spk);
    }

    #[test]
    fn speaker_encode_is_frame_permutation_invariant() {
        let cfg = tiny_cfg();
        let p = ModuleParams::<f64>::init(cfg, 2);
        let data = feature_matrix(7, cfg.n_bands, 5);
        let mut permuted = data.clone();
        // reverse row order
        for (i, row) in data.outer_iter().enumerate() {
            permuted.row_mut(6 - i).assign(&row);
        }
        let a = speaker_encode(&FeatureMatrix::new(data), &p).unwrap();
        let b = speaker_encode(&FeatureMatrix::new(permuted), &p).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn posteriors_have_positive_scales_and_are_deterministic() {
        let cfg = tiny_cfg();
        let p = ModuleParams::<f64>::init(cfg, 3);
        let feats = FeatureMatrix::new(feature_matrix(9, cfg.n_bands, 8));
        let segs = split_segments(&feats, cfg.seg_frames);
        assert_eq!(segs.len(), 3);

        let q_a = posterior_z2(&segs[0], &p).unwrap();
        let q_b = posterior_z2(&segs[0], &p).unwrap();
        assert_eq!(q_a, q_b);
        assert!(q_a.scale().iter().all(|&s| s > 0.0));

        let z2 = crate::fhvae::reparam_sample(&q_a, 7);
        let q1 = super::posterior_z1(&segs[0], &z2, &p).unwrap();
        assert_eq!(q1.dim(), cfg.seg_frames * cfg.d1);
        assert!(q1.scale().iter().all(|&s| s > 0.0));

        // conditioning on a different z2 sample changes the posterior
        let other_z2 = z2.mapv(|v| v + 0.5);
        let q1_other = super::posterior_z1(&segs[0], &other_z2, &p).unwrap();
        assert_ne!(q1, q1_other);
    }

    #[test]
    fn objective_kl_matches_closed_form() {
        // one utterance, λ_kl_z2 = 1, everything else 0: the tape's KL node
        // must equal the closed-form kl averaged over segments
        let cfg = tiny_cfg();
        let p = ModuleParams::<f64>::init(cfg, 4);
        let features = feature_matrix(6, cfg.n_bands, 9);
        let batch = vec![UttData {
            features: features.clone(),
            h_cap: Array1::zeros(cfg.cap_dim),
        }];
        let noise = draw_noise(&cfg, &batch, 0, 0);
        let w = LossWeights {
            alpha: 0.5,
            lambda_spk: 0.0,
            lambda_rec: 0.0,
            lambda_kl_z2: 1.0,
            lambda_kl_z1: 0.0,
        };
        let tape = Tape::new();
        let pv = bind_params(&tape, &p);
        let obj = build_objective(&tape, &pv, &cfg, &batch, &noise, &w, None);

        let feats = FeatureMatrix::new(features);
        let e = speaker_encode(&feats, &p).unwrap();
        let mu_spk = prior_mean(&e, &p).unwrap();
        let segs = split_segments(&feats, cfg.seg_frames);
        let expected: f64 = segs
            .iter()
            .map(|s| kl_closed(&posterior_z2(s, &p).unwrap(), &mu_spk).unwrap())
            .sum::<f64>()
            / segs.len() as f64;

        assert_abs_diff_eq!(tape.scalar_value(obj.l_kl_z2), expected, epsilon = 1e-10);
        assert_abs_diff_eq!(tape.scalar_value(obj.total), expected, epsilon = 1e-10);
    }

    #[test]
    fn params_save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        let p = ModuleParams::<f64>::init(tiny_cfg(), 5);
        p.save(&path).unwrap();
        let q = ModuleParams::<f64>::load(&path).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn reconstruct_shapes_and_mismatch_errors() {
        let cfg = tiny_cfg();
        let p = ModuleParams::<f64>::init(cfg, 6);
        let z1 = Array2::<f64>::zeros((3, cfg.d1));
        let z2 = Array1::<f64>::zeros(cfg.d2);
        let out = reconstruct(&z1, &z2, &p).unwrap();
        assert_eq!(out.dim(), (3, cfg.n_bands));

        let bad_z2 = Array1::<f64>::zeros(cfg.d2 + 1);
        assert!(reconstruct(&z1, &bad_z2, &p).is_err());
        let bad_cap = Array1::<f64>::zeros(cfg.cap_dim + 2);
        assert!(predict_espk(&bad_cap, &p).is_err());
    }

    #[test]
    fn gaussian_helpers_reachable() {
        // kl of the tape node construction is covered above; sanity-check
        // that a posterior built by hand matches dimensions
        let q = GaussianDiag::new(Array1::zeros(4), Array1::from_elem(4, 1.0)).unwrap();
        assert_eq!(q.dim(), 4);
    }
}
