//! `extract-cot`: per-utterance control labels plus per-speaker baselines.

use crate::context::{write_jsonl, Ctx};
use anyhow::{bail, Context as _, Result};
use captalk_core::corpus::CorpusManifest;
use captalk_core::cot::{
    assemble_cot, baseline_from_stats, energy_bin, pitch_bin, speed_bin, Annotations,
    ProsodyAttribute, UtteranceStats,
};
use captalk_core::dsp::read_wav;
use captalk_core::Waveform;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Serialize)]
struct CotRecord {
    utterance_id: String,
    speaker_id: String,
    emotion: Option<String>,
    tone: Option<String>,
    pitch: String,
    energy: String,
    speed: String,
    /// Fixed-order control string; missing annotations render as
    /// `<missing>` placeholders.
    cot: String,
    missing_annotation: bool,
}

pub fn run(ctx: &mut Ctx) -> Result<()> {
    let manifest = CorpusManifest::load(&ctx.config.paths.manifest)?;
    let vocab = ctx.config.cot_vocab();
    let annotations = Annotations::load(&ctx.config.paths.annotations, &vocab)?;
    annotations.check_ids_exist(&manifest.utterance_ids())?;

    let dsp = ctx.config.dsp_config();
    let (pitch_t, energy_t, speed_t) = ctx.config.bin_thresholds()?;

    // per-utterance stats, grouped by speaker for the baselines
    let mut stats: BTreeMap<String, UtteranceStats<f64>> = BTreeMap::new();
    let mut baselines = Vec::new();
    for (speaker, utt_ids) in manifest.by_speaker() {
        let mut speaker_stats = Vec::new();
        for id in &utt_ids {
            let record = &manifest.utterances[id];
            let wave: Waveform = read_wav(manifest.audio_path(record))
                .with_context(|| format!("reading audio of {id}"))?;
            match captalk_core::cot::utterance_stats(&wave, &record.text, &dsp)? {
                Some(s) => {
                    speaker_stats.push(s);
                    stats.insert(id.clone(), s);
                }
                None => ctx.warn(format!("{id}: no usable voiced speech, excluded")),
            }
        }
        if speaker_stats.is_empty() {
            bail!("speaker {speaker} has no utterance with voiced speech");
        }
        baselines.push(baseline_from_stats(&speaker, &speaker_stats));
    }

    let baseline_by_speaker: BTreeMap<&str, _> = baselines
        .iter()
        .map(|b| (b.speaker_id.as_str(), b))
        .collect();

    let mut records = Vec::new();
    for (id, record) in &manifest.utterances {
        let Some(s) = stats.get(id) else {
            continue; // warned above
        };
        let base = baseline_by_speaker[record.speaker_id.as_str()];
        let pitch = pitch_bin(s.semitone, base, pitch_t);
        let energy = energy_bin(s.rms, base, energy_t);
        let speed = speed_bin(s.rate, base, speed_t);

        let (emotion, tone) = match annotations.get(id) {
            Some((e, t)) => (Some(e.to_string()), Some(t.to_string())),
            None => {
                ctx.warn(format!("{id}: no emotion/tone annotation"));
                (None, None)
            }
        };
        let cot = match (&emotion, &tone) {
            (Some(e), Some(t)) => assemble_cot(e, t, pitch, energy, speed, &vocab)?.serialize(),
            _ => format!(
                "<missing><missing><{}><{}><{}>",
                pitch.render(ProsodyAttribute::Pitch),
                energy.render(ProsodyAttribute::Energy),
                speed.render(ProsodyAttribute::Speed)
            ),
        };
        records.push(CotRecord {
            utterance_id: id.clone(),
            speaker_id: record.speaker_id.clone(),
            missing_annotation: emotion.is_none(),
            emotion,
            tone,
            pitch: pitch.render(ProsodyAttribute::Pitch),
            energy: energy.render(ProsodyAttribute::Energy),
            speed: speed.render(ProsodyAttribute::Speed),
            cot,
        });
    }

    write_jsonl(&ctx.out_path("cot_labels.jsonl"), &records)?;
    write_jsonl(&ctx.out_path("baselines.jsonl"), &baselines)?;
    println!(
        "extract-cot: {} labels, {} baselines -> {}",
        records.len(),
        baselines.len(),
        ctx.out_dir.display()
    );
    Ok(())
}
