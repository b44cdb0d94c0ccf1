//! `assemble`: dataset instances → laid-out token samples with masks.
//!
//! Reads the dataset files produced by `build-corpus` plus the control
//! labels from `extract-cot`, builds the fixed vocabulary from the
//! manifest, and writes one line-delimited sample file per branch along
//! with `vocab.json`.

use crate::context::{write_json, write_jsonl, Ctx};
use crate::BranchArg;
use anyhow::{Context as _, Result};
use captalk_core::corpus::{CorpusManifest, DialogueInstance, SingleInstance};
use captalk_core::cot::CoTLabel;
use captalk_core::dsp::read_wav;
use captalk_core::seqlayout::assemble::{assemble_dialogue, assemble_single};
use captalk_core::seqlayout::{TrainingSample, Vocabulary};
use captalk_core::Waveform;
use serde::de::DeserializeOwned;
use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("reading {} (run the earlier stages first)", path.display()))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[derive(serde::Deserialize)]
struct CotLine {
    utterance_id: String,
    cot: String,
    missing_annotation: bool,
}

pub fn run(ctx: &mut Ctx, branch: BranchArg) -> Result<()> {
    let manifest = CorpusManifest::load(&ctx.config.paths.manifest)?;
    let vocab = Vocabulary::build(
        &manifest,
        &ctx.config.cot_vocab(),
        ctx.config.seqlayout.codebook_size,
    );
    write_json(&ctx.out_path("vocab.json"), &vocab)?;

    let dsp = ctx.config.dsp_config();
    let mut assemble_cfg = ctx.config.assemble_config();
    assemble_cfg.seed = ctx.seed;

    // acoustic codes per utterance, shared across caption styles
    let mut code_cache: HashMap<String, Waveform> = HashMap::new();
    let mut load_audio = |id: &str| -> Result<Waveform> {
        if let Some(w) = code_cache.get(id) {
            return Ok(w.clone());
        }
        let record = manifest
            .utterances
            .get(id)
            .with_context(|| format!("dataset references unknown utterance {id}"))?;
        let wave: Waveform =
            read_wav(manifest.audio_path(record)).with_context(|| format!("audio of {id}"))?;
        code_cache.insert(id.to_string(), wave.clone());
        Ok(wave)
    };

    if branch.includes_single() {
        let instances: Vec<SingleInstance> = read_jsonl(&ctx.out_path("single.jsonl"))?;
        let mut samples: Vec<TrainingSample> = Vec::with_capacity(instances.len());
        for inst in &instances {
            let wave = load_audio(&inst.utterance_id)?;
            samples.push(assemble_single(inst, &wave, &vocab, &dsp, &assemble_cfg)?);
        }
        write_jsonl(&ctx.out_path("samples_single.jsonl"), &samples)?;
        println!("assemble: {} single samples", samples.len());
    }

    if branch.includes_dialogue() {
        let cot_lines: Vec<CotLine> = read_jsonl(&ctx.out_path("cot_labels.jsonl"))?;
        let vocab_cfg = ctx.config.cot_vocab();
        let mut labels: BTreeMap<String, CoTLabel> = BTreeMap::new();
        for line in cot_lines {
            if line.missing_annotation {
                continue;
            }
            labels.insert(
                line.utterance_id.clone(),
                CoTLabel::parse(&line.cot, &vocab_cfg)?,
            );
        }

        let instances: Vec<DialogueInstance> = read_jsonl(&ctx.out_path("dialogue.jsonl"))?;
        let mut samples: Vec<TrainingSample> = Vec::new();
        let mut skipped = 0usize;
        for inst in &instances {
            for &target_turn in &inst.target_turns {
                let turn = inst
                    .turns
                    .iter()
                    .find(|t| t.turn_index == target_turn)
                    .expect("target turn inside its window");
                let Some(label) = labels.get(&turn.utterance_id) else {
                    skipped += 1;
                    continue;
                };
                let wave = load_audio(&turn.utterance_id)?;
                samples.push(assemble_dialogue(
                    inst,
                    target_turn,
                    label,
                    &wave,
                    &vocab,
                    &dsp,
                    &assemble_cfg,
                )?);
            }
        }
        if skipped > 0 {
            ctx.warn(format!(
                "dialogue: {skipped} supervised turn(s) without a complete control label skipped"
            ));
        }
        write_jsonl(&ctx.out_path("samples_dialogue.jsonl"), &samples)?;
        println!("assemble: {} dialogue samples", samples.len());
    }

    Ok(())
}
