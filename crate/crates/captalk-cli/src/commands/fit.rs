//! `fit-fhvae` and `grad-check`: train the conditioning module and verify
//! its gradients against finite differences.

use crate::context::Ctx;
use anyhow::{bail, Context as _, Result};
use captalk_core::corpus::{CaptionStyle, CorpusManifest};
use captalk_core::dsp::{log_mel, read_wav};
use captalk_core::fhvae::{caption_embedding, fit, grad_check, standardize_batch, FitOptions, UttData};
use captalk_core::seqlayout::LossReport;
use captalk_core::Waveform;
use std::io::Write;

const GRAD_CHECK_THRESHOLD: f64 = 1e-4;

fn caption_style(ctx: &Ctx) -> Result<CaptionStyle> {
    match ctx.config.fhvae.caption_style.as_str() {
        "aps" => Ok(CaptionStyle::Aps),
        "dsd" => Ok(CaptionStyle::Dsd),
        "rp" => Ok(CaptionStyle::Rp),
        other => bail!("unknown caption style {other:?} (expected aps, dsd, or rp)"),
    }
}

/// Feature/caption pairs for every usable quality-passing utterance, in
/// utterance-id order.
fn build_batch(ctx: &mut Ctx, manifest: &CorpusManifest) -> Result<Vec<UttData<f64>>> {
    let dsp = ctx.config.dsp_config();
    let fh = ctx.config.fhvae_config();
    let style = caption_style(ctx)?;
    let mut batch = Vec::new();
    for (id, record) in &manifest.utterances {
        if !record.quality_pass {
            continue;
        }
        let caption = match (&record.captions, manifest.speaker_captions.get(&record.speaker_id)) {
            (Some(caps), _) => caps.style(style).to_string(),
            (None, Some(caps)) => caps.style(style).to_string(),
            (None, None) => {
                ctx.warn(format!("{id}: no caption available, skipped for fitting"));
                continue;
            }
        };
        let wave: Waveform =
            read_wav(manifest.audio_path(record)).with_context(|| format!("audio of {id}"))?;
        let feats = log_mel(&wave, &dsp)?;
        if feats.n_frames() < fh.seg_frames / 2 {
            ctx.warn(format!("{id}: too short for one segment, skipped"));
            continue;
        }
        batch.push(UttData {
            features: feats.data().clone(),
            h_cap: caption_embedding(&caption, fh.cap_dim, ctx.seed),
        });
    }
    if batch.is_empty() {
        bail!("no usable utterances to fit on");
    }
    standardize_batch(&mut batch);
    Ok(batch)
}

pub fn run_fit(ctx: &mut Ctx, with_grad_check: bool) -> Result<()> {
    let manifest = CorpusManifest::load(&ctx.config.paths.manifest)?;
    let batch = build_batch(ctx, &manifest)?;
    let fh = ctx.config.fhvae_config();
    let weights = ctx.config.loss_weights();

    if with_grad_check {
        run_check_on(&batch, ctx)?;
    }

    let opts = FitOptions {
        epochs: ctx.config.fhvae.epochs,
        step: ctx.config.fhvae.step,
        seed: ctx.seed,
    };
    let (params, history) = fit(&batch, fh, &weights, &opts)?;

    let params_path = ctx.out_path("fhvae_params.bin");
    params.save(&params_path)?;

    let csv_path = ctx.out_path("loss_history.csv");
    let mut csv = std::fs::File::create(&csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))?;
    writeln!(csv, "epoch,{}", LossReport::<f64>::CSV_HEADER)?;
    for (epoch, report) in history.iter().enumerate() {
        writeln!(csv, "{epoch},{}", report.csv_row())?;
    }

    let last = history.last().expect("at least one epoch");
    println!(
        "fit-fhvae: {} utterances, {} epochs, final loss {:.6} -> {}",
        batch.len(),
        history.len(),
        last.grand_total,
        params_path.display()
    );
    Ok(())
}

/// Standalone `grad-check`: a small sub-batch keeps the finite-difference
/// sweep fast while still covering every tensor.
pub fn run_grad_check(ctx: &mut Ctx) -> Result<()> {
    let manifest = CorpusManifest::load(&ctx.config.paths.manifest)?;
    let batch = build_batch(ctx, &manifest)?;
    run_check_on(&batch, ctx)
}

fn run_check_on(batch: &[UttData<f64>], ctx: &Ctx) -> Result<()> {
    let fh = ctx.config.fhvae_config();
    let weights = ctx.config.loss_weights();

    // two utterances, trimmed to at most two segments each
    let small: Vec<UttData<f64>> = batch
        .iter()
        .take(2)
        .map(|u| {
            let rows = u.features.nrows().min(2 * fh.seg_frames);
            UttData {
                features: u.features.slice(ndarray::s![..rows, ..]).to_owned(),
                h_cap: u.h_cap.clone(),
            }
        })
        .collect();

    let params = captalk_core::fhvae::ModuleParams::init(fh, ctx.seed);
    let report = grad_check(&params, &small, &weights, 1e-5, 4, ctx.seed)?;
    println!(
        "grad-check: max relative error {:.3e} at {} ({} coordinates); stop-gradient leak {:.1e}",
        report.max_rel_err, report.worst_tensor, report.n_checked, report.stop_grad_max_abs
    );
    if report.max_rel_err >= GRAD_CHECK_THRESHOLD {
        bail!(
            "gradient check failed: {:.3e} >= {GRAD_CHECK_THRESHOLD:e}",
            report.max_rel_err
        );
    }
    if report.stop_grad_max_abs != 0.0 {
        bail!("stop-gradient leaked into the speaker encoder");
    }
    Ok(())
}
