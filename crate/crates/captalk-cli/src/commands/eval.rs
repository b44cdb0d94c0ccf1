//! `eval`: similarity, timbre reuse, controllability, accuracy, preference.

use crate::context::{write_json, Ctx};
use anyhow::{bail, Context as _, Result};
use captalk_core::corpus::{CaptionStyle, CorpusManifest};
use captalk_core::dsp::{log_mel, read_wav};
use captalk_core::evalkit::{
    controllability, cot_accuracy, load_judgments, load_pairs, load_votes, pairwise_preference,
    sim, timbre_reuse_report, toy_embed,
};
use captalk_core::fhvae::generate::{reuse_experiment, ReuseRunConfig};
use captalk_core::fhvae::caption_embedding;
use captalk_core::ModuleParams;
use captalk_core::{SpeakerEmbedding, Waveform};
use std::path::{Path, PathBuf};

pub fn run_sim(ctx: &mut Ctx, wavs: &[PathBuf]) -> Result<()> {
    if wavs.len() < 2 {
        bail!("eval sim needs at least two wav files");
    }
    let dsp = ctx.config.dsp_config();
    let mut embeddings: Vec<SpeakerEmbedding> = Vec::new();
    for path in wavs {
        let wave: Waveform = read_wav(path)?;
        embeddings.push(toy_embed(&log_mel(&wave, &dsp)?)?);
    }
    let value = sim(&embeddings)?;
    let report = serde_json::json!({
        "sim": value,
        "n_utterances": wavs.len(),
    });
    write_json(&ctx.out_path("eval_sim.json"), &report)?;
    println!("sim over {} utterances: {value:.4}", wavs.len());
    Ok(())
}

pub fn run_reuse(ctx: &mut Ctx, params_path: Option<&Path>) -> Result<()> {
    let default_path = ctx.out_path("fhvae_params.bin");
    let params_path = params_path.unwrap_or(&default_path);
    let params: ModuleParams = ModuleParams::load(params_path)
        .with_context(|| format!("loading {} (run fit-fhvae first)", params_path.display()))?;

    let manifest = CorpusManifest::load(&ctx.config.paths.manifest)?;
    let speaker = &ctx.config.eval.reuse_speaker;
    let caps = manifest
        .speaker_captions
        .get(speaker)
        .with_context(|| format!("no speaker-level captions for {speaker:?}"))?;
    let style = match ctx.config.fhvae.caption_style.as_str() {
        "dsd" => CaptionStyle::Dsd,
        "rp" => CaptionStyle::Rp,
        _ => CaptionStyle::Aps,
    };
    let h_cap = caption_embedding(caps.style(style), params.cfg.cap_dim, ctx.seed);

    let run = ReuseRunConfig {
        n_utterances: ctx.config.eval.reuse_utterances,
        segments_per_utterance: ctx.config.eval.reuse_segments,
        caption_noise: ctx.config.eval.caption_noise,
    };
    let (fixed, resampled) = reuse_experiment(&params, &h_cap, &run, ctx.seed)?;

    let embed_all = |feats: &[captalk_core::FeatureMatrix]| -> Result<Vec<SpeakerEmbedding>> {
        feats.iter().map(|f| Ok(toy_embed(f)?)).collect()
    };
    let report = timbre_reuse_report(&embed_all(&fixed)?, &embed_all(&resampled)?)?;
    write_json(&ctx.out_path("eval_reuse.json"), &report)?;
    print!("{}", report.text_table());
    Ok(())
}

pub fn run_control(ctx: &mut Ctx, pairs_path: &Path) -> Result<()> {
    let pairs = load_pairs(pairs_path)?;
    let rates = controllability(&pairs);
    let report = serde_json::json!({
        // staying in the same bin counts as failure
        "success_rule": "strict-movement",
        "n_pairs": pairs.len(),
        "success_rate": rates,
    });
    write_json(&ctx.out_path("eval_control.json"), &report)?;
    println!("controllability over {} pairs (strict movement):", pairs.len());
    for (attribute, rate) in &rates {
        println!("  {attribute:<8} {rate:.4}");
    }
    Ok(())
}

pub fn run_cot_acc(ctx: &mut Ctx, judgments_path: &Path) -> Result<()> {
    let records = load_judgments(judgments_path)?;
    let acc = cot_accuracy(&records)?;
    write_json(&ctx.out_path("eval_cot_acc.json"), &acc)?;
    print!("{}", acc.text_table());
    Ok(())
}

pub fn run_pref(ctx: &mut Ctx, votes_path: &Path) -> Result<()> {
    let votes = load_votes(votes_path)?;
    let report = pairwise_preference(&votes)?;
    write_json(&ctx.out_path("eval_pref.json"), &report)?;
    println!(
        "preference over {} items: a {:.1}%, b {:.1}%, ties {:.1}%",
        report.n_items,
        report.share_a * 100.0,
        report.share_b * 100.0,
        report.share_tie * 100.0
    );
    Ok(())
}
