//! Turns dataset instances into laid-out training samples: tokenizes the
//! caption/context/text sections, derives acoustic codes from the audio, and
//! seeds the decoder-frame subset per instance.

use super::codec::synthetic_codes;
use super::vocab::{Marker, Vocabulary};
use super::{
    layout_dialogue, layout_single, sample_dec_frames, LayoutMarkers, LayoutMode, TokenId,
    TrainingSample,
};
use crate::corpus::{DialogueInstance, SingleInstance};
use crate::cot::CoTLabel;
use crate::dsp::{DspConfig, Waveform};
use crate::error::{Error, Result};
use crate::num::{mix_seed, Real};

/// Knobs for sample assembly.
#[derive(Debug, Clone, Copy)]
pub struct AssembleConfig {
    /// Fraction of target frames in the decoder-loss subset.
    pub dec_fraction: f64,
    /// Base seed; each instance derives its own stream from it.
    pub seed: u64,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        Self {
            dec_fraction: 0.25,
            seed: 0,
        }
    }
}

pub fn text_tokens(v: &Vocabulary, s: &str) -> Result<Vec<TokenId>> {
    s.chars().map(|c| v.char_token(c)).collect()
}

/// `[CapStart] chars [CapEnd]`.
pub fn caption_tokens(v: &Vocabulary, caption: &str) -> Result<Vec<TokenId>> {
    let mut out = vec![v.marker(Marker::CapStart)];
    out.extend(text_tokens(v, caption)?);
    out.push(v.marker(Marker::CapEnd));
    Ok(out)
}

/// `[CtxStart] (speaker-tag chars)* [CtxEnd]`, turns in order.
pub fn context_tokens(v: &Vocabulary, turns: &[(&str, &str)]) -> Result<Vec<TokenId>> {
    let mut out = vec![v.marker(Marker::CtxStart)];
    for (speaker, text) in turns {
        out.push(v.speaker_token(speaker)?);
        out.extend(text_tokens(v, text)?);
    }
    out.push(v.marker(Marker::CtxEnd));
    Ok(out)
}

/// Target text with its speaker tag in front.
pub fn target_text_tokens(v: &Vocabulary, speaker: &str, text: &str) -> Result<Vec<TokenId>> {
    let mut out = vec![v.speaker_token(speaker)?];
    out.extend(text_tokens(v, text)?);
    Ok(out)
}

/// Assembles one single-branch sample from its dataset instance and audio.
pub fn assemble_single<F: Real>(
    inst: &SingleInstance,
    audio: &Waveform<F>,
    vocab: &Vocabulary,
    dsp: &DspConfig<F>,
    cfg: &AssembleConfig,
) -> Result<TrainingSample> {
    let markers = LayoutMarkers::from_vocab(vocab);
    let cap = caption_tokens(vocab, &inst.caption)?;
    let txt = target_text_tokens(vocab, &inst.speaker_id, &inst.text)?;
    let frames = synthetic_codes(audio, dsp, vocab.codebook_size())?;
    let t = frames.len();
    let sample = layout_single(inst.instance_id.clone(), &cap, &txt, frames, &markers)?;
    sample.with_dec_mask(sample_dec_frames(
        t,
        cfg.dec_fraction,
        mix_seed(cfg.seed, &inst.instance_id),
    )?)
}

/// Assembles one dialogue-branch sample for a specific supervised turn. The
/// context is every turn in the window strictly before the target turn.
pub fn assemble_dialogue<F: Real>(
    inst: &DialogueInstance,
    target_turn: usize,
    cot: &CoTLabel,
    target_audio: &Waveform<F>,
    vocab: &Vocabulary,
    dsp: &DspConfig<F>,
    cfg: &AssembleConfig,
) -> Result<TrainingSample> {
    let markers = LayoutMarkers::from_vocab(vocab);
    let target = inst
        .turns
        .iter()
        .find(|t| t.turn_index == target_turn)
        .ok_or_else(|| {
            Error::Layout(format!(
                "turn {target_turn} is not inside instance {}",
                inst.instance_id
            ))
        })?;
    if target.speaker_id != inst.target_speaker_id {
        return Err(Error::Layout(format!(
            "turn {target_turn} belongs to {:?}, not the target speaker",
            target.speaker_id
        )));
    }

    let cap = caption_tokens(vocab, &inst.caption)?;
    let preceding: Vec<(&str, &str)> = inst
        .turns
        .iter()
        .filter(|t| t.turn_index < target_turn)
        .map(|t| (t.speaker_id.as_str(), t.text.as_str()))
        .collect();
    let ctx = context_tokens(vocab, &preceding)?;
    let txt = target_text_tokens(vocab, &target.speaker_id, &target.text)?;
    let cot_tokens = vocab.cot_tokens(cot)?;
    let frames = synthetic_codes(target_audio, dsp, vocab.codebook_size())?;
    let t = frames.len();

    let instance_id = format!("{}#t{:03}", inst.instance_id, target_turn);
    let sample = layout_dialogue(
        instance_id.clone(),
        &cap,
        &ctx,
        &txt,
        Some(&cot_tokens),
        frames,
        &markers,
        LayoutMode::Training,
    )?;
    sample.with_dec_mask(sample_dec_frames(
        t,
        cfg.dec_fraction,
        mix_seed(cfg.seed, &instance_id),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CaptionStyle, TurnRef};
    use crate::cot::{CotVocab, ProsodyBin};
    use crate::dsp::testsig;
    use crate::seqlayout::TokenKind;

    fn vocab() -> Vocabulary {
        Vocabulary::from_parts(
            (' '..='z').collect(),
            vec!["spk_a".into(), "spk_b".into()],
            &CotVocab::default(),
            64,
        )
    }

    #[test]
    fn context_serializes_turn_blocks_in_order() {
        let v = vocab();
        let turns = [
            ("spk_a", "one"),
            ("spk_b", "two"),
            ("spk_a", "three"),
            ("spk_b", "four"),
        ];
        let ctx = context_tokens(&v, &turns).unwrap();
        assert_eq!(v.kind(ctx[0]), TokenKind::Marker(Marker::CtxStart));
        assert_eq!(*ctx.last().unwrap(), v.marker(Marker::CtxEnd));
        let speaker_tags: Vec<String> = ctx
            .iter()
            .filter_map(|&id| match v.kind(id) {
                TokenKind::Speaker(s) => Some(s),
                _ => None,
            })
            .collect();
        assert_eq!(speaker_tags, vec!["spk_a", "spk_b", "spk_a", "spk_b"]);
    }

    #[test]
    fn assemble_single_produces_valid_sample() {
        let v = vocab();
        let inst = SingleInstance {
            instance_id: "u1#aps".into(),
            utterance_id: "u1".into(),
            speaker_id: "spk_a".into(),
            style: CaptionStyle::Aps,
            caption: "a warm voice".into(),
            text: "hello there".into(),
            audio: "x.wav".into(),
        };
        let audio = testsig::sine::<f64>(220.0, 0.5, 1.0);
        let sample = assemble_single(
            &inst,
            &audio,
            &v,
            &DspConfig::default(),
            &AssembleConfig::default(),
        )
        .unwrap();
        sample.validate().unwrap();
        assert!(!sample.dec_mask.is_empty());
        assert_eq!(sample.espk_slot_index, inst.caption.chars().count() + 2);
    }

    #[test]
    fn assemble_dialogue_context_is_preceding_turns_only() {
        let v = vocab();
        let mk_turn = |i: usize, spk: &str, text: &str| TurnRef {
            turn_index: i,
            speaker_id: spk.into(),
            utterance_id: format!("u{i}"),
            text: text.into(),
            audio: format!("u{i}.wav"),
        };
        let inst = DialogueInstance {
            instance_id: "s1#0-4#spk_b#aps".into(),
            session_id: "s1".into(),
            target_speaker_id: "spk_b".into(),
            context_speaker_id: "spk_a".into(),
            window_start: 0,
            window_end: 4,
            style: CaptionStyle::Aps,
            caption: "steady speaker".into(),
            turns: vec![
                mk_turn(0, "spk_a", "first"),
                mk_turn(1, "spk_b", "second"),
                mk_turn(2, "spk_a", "third"),
                mk_turn(3, "spk_b", "fourth"),
            ],
            target_turns: vec![1, 3],
        };
        let label = CoTLabel {
            emotion: "neutral".into(),
            tone: "statement".into(),
            pitch: ProsodyBin::Normal,
            energy: ProsodyBin::Normal,
            speed: ProsodyBin::Normal,
        };
        let audio = testsig::sine::<f64>(260.0, 0.4, 0.8);
        let sample = assemble_dialogue(
            &inst,
            3,
            &label,
            &audio,
            &v,
            &DspConfig::default(),
            &AssembleConfig::default(),
        )
        .unwrap();
        sample.validate().unwrap();
        assert_eq!(sample.cot_mask.len(), 5);

        // context carries exactly the three preceding turns
        let tags = sample
            .prefix
            .iter()
            .filter(|&&id| matches!(v.kind(id), TokenKind::Speaker(_)))
            .count();
        assert_eq!(tags, 4); // 3 context turns + 1 target tag

        // supervising a context-speaker turn is rejected
        assert!(assemble_dialogue(
            &inst,
            2,
            &label,
            &audio,
            &v,
            &DspConfig::default(),
            &AssembleConfig::default(),
        )
        .is_err());
    }
}
