//! Deterministic synthetic fixture corpus: two harmonic "speakers" with
//! distinct spectral envelopes, dialogue sessions, captions, annotations,
//! and small evaluation files. Everything derives from one seed; audio is
//! quantized to 16-bit PCM so downstream hashes are stable.

use crate::corpus::{CaptionLevel, CaptionSet};
use crate::dsp::{write_wav_i16, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::num::mix_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Voice recipe for one synthetic speaker.
#[derive(Debug, Clone, Copy)]
pub struct VoiceSpec {
    pub base_f0: f64,
    /// Relative harmonic amplitudes; the spectral envelope.
    pub harmonics: [f64; 8],
}

/// Dark, low voice.
pub const VOICE_A: VoiceSpec = VoiceSpec {
    base_f0: 150.0,
    harmonics: [1.0, 0.55, 0.32, 0.18, 0.10, 0.055, 0.03, 0.016],
};

/// Bright, higher voice with energy shifted up the spectrum.
pub const VOICE_B: VoiceSpec = VoiceSpec {
    base_f0: 255.0,
    harmonics: [0.35, 0.5, 0.85, 1.0, 0.8, 0.55, 0.35, 0.2],
};

/// Style knobs for one utterance.
#[derive(Debug, Clone, Copy)]
pub struct StyleSpec {
    /// Semitone offset from the speaker's base pitch.
    pub pitch_offset_st: f64,
    pub amplitude: f64,
    /// Scales syllable gaps; higher is slower.
    pub gap_scale: f64,
}

/// Synthesizes one utterance: syllable bursts of a harmonic tone with short
/// gaps, 10 ms ramps against clicks, and a silent tail.
pub fn synthesize_utterance(
    voice: &VoiceSpec,
    style: &StyleSpec,
    text: &str,
    seed: u64,
) -> Waveform<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_chars = crate::cot::char_count(text).max(2);
    let n_syllables = (n_chars / 3).clamp(2, 12);

    let mut samples: Vec<f64> = Vec::new();
    let sr = SAMPLE_RATE as f64;
    for _ in 0..n_syllables {
        let dur = rng.random_range(0.13..0.20);
        let gap = rng.random_range(0.03..0.07) * style.gap_scale;
        let jitter = rng.random_range(-0.5..0.5);
        let f0 = voice.base_f0 * 2f64.powf((style.pitch_offset_st + jitter) / 12.0);

        let n = (dur * sr) as usize;
        let ramp = (0.01 * sr) as usize;
        for i in 0..n {
            let t = i as f64 / sr;
            let mut v = 0.0;
            for (k, &amp) in voice.harmonics.iter().enumerate() {
                let freq = f0 * (k + 1) as f64;
                if freq < sr / 2.0 {
                    v += amp * (2.0 * std::f64::consts::PI * freq * t).sin();
                }
            }
            let norm: f64 = voice.harmonics.iter().sum();
            let mut v = v / norm * style.amplitude;
            if i < ramp {
                v *= i as f64 / ramp as f64;
            }
            if n - i <= ramp {
                v *= (n - i) as f64 / ramp as f64;
            }
            samples.push(v);
        }
        samples.extend(std::iter::repeat_n(0.0, (gap * sr) as usize));
    }
    samples.extend(std::iter::repeat_n(0.0, (0.08 * sr) as usize));
    Waveform::new(samples).expect("synthesized audio is non-empty")
}

const TURN_TEXTS: [&str; 25] = [
    "did you see the northern lights last night",
    "only for a moment before the clouds came in",
    "we should drive out past the ridge next time",
    "the forecast says clear skies on thursday",
    "then thursday it is, bring the good camera",
    "i will charge the batteries tonight",
    "do you remember the turn off for the lake road",
    "it is the gravel one just after the old mill",
    "right, the one with the broken gate",
    "they fixed the gate this summer actually",
    "good, last time we had to walk the final mile",
    "my boots still have not recovered",
    "we can park right at the shore now",
    "perfect spot to set up the tripod",
    "if the wind stays down the water will mirror everything",
    "that would make an incredible photograph",
    "bring the flask, it gets cold fast out there",
    "already packed, along with the wool blanket",
    "you think of everything",
    "someone has to keep us from freezing",
    "what time should we leave town",
    "around nine, the display peaks near midnight",
    "nine works, i will pick you up",
    "meet me by the bakery, i owe you a pastry",
    "deal, and i owe you one for the last trip",
];

const SHORT_TEXTS: [&str; 8] = [
    "the kettle is already on",
    "leave the window open a little",
    "that song has been stuck in my head all day",
    "pass me the blue notebook please",
    "the garden needs rain more than we do",
    "i counted twelve boats in the harbor",
    "your coat is hanging by the door",
    "the stairs creak on the third step",
];

const SOLO_TEXTS: [&str; 6] = [
    "morning light suits this kitchen",
    "the library closes early on sundays",
    "fresh snow always quiets the street",
    "the ferry horn carries across the bay",
    "someone repainted the corner shop",
    "the orchard smells like late summer",
];

fn style_for(index: usize, seed: u64) -> StyleSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &format!("style:{index}")));
    StyleSpec {
        pitch_offset_st: rng.random_range(-2.0..2.0),
        amplitude: rng.random_range(0.15..0.55),
        gap_scale: rng.random_range(0.7..1.6),
    }
}

fn utterance_caption(id: &str, style: &StyleSpec) -> CaptionSet {
    let pitch_word = if style.pitch_offset_st > 0.8 {
        "raised"
    } else if style.pitch_offset_st < -0.8 {
        "lowered"
    } else {
        "steady"
    };
    let loud_word = if style.amplitude > 0.42 {
        "loud"
    } else if style.amplitude < 0.24 {
        "soft"
    } else {
        "moderate"
    };
    let pace_word = if style.gap_scale > 1.3 {
        "unhurried"
    } else if style.gap_scale < 0.9 {
        "quick"
    } else {
        "even"
    };
    CaptionSet {
        aps: format!(
            "Pitch: {pitch_word}. Volume: {loud_word}. Speaking rate: {pace_word}. Clarity: clean tone ({id})."
        ),
        dsd: format!("A {loud_word} voice at a {pitch_word} pitch, delivered at an {pace_word} pace."),
        rp: format!("Someone speaking in a {loud_word}, {pace_word} manner about everyday matters."),
        level: CaptionLevel::Utterance,
    }
}

fn speaker_caption(speaker: &str) -> CaptionSet {
    match speaker {
        "spk_a" => CaptionSet {
            aps: "Gender: male. Age: middle-aged. Pitch: low and stable. Timbre texture: dark and warm, energy concentrated in the low harmonics.".into(),
            dsd: "A deep, warm voice that stays low and even, like someone narrating by a fire.".into(),
            rp: "A calm older narrator recounting a long journey in a low, settled voice.".into(),
            level: CaptionLevel::Speaker,
        },
        _ => CaptionSet {
            aps: "Gender: female. Age: young adult. Pitch: high and lively. Timbre texture: bright and ringing, energy concentrated in the upper harmonics.".into(),
            dsd: "A bright, ringing voice that sits high and carries easily across a room.".into(),
            rp: "An energetic tour guide pointing out sights in a clear, high voice.".into(),
            level: CaptionLevel::Speaker,
        },
    }
}

#[derive(Serialize)]
struct UtteranceLine<'a> {
    r#type: &'static str,
    utterance_id: &'a str,
    speaker_id: &'a str,
    text: &'a str,
    audio: String,
    quality_pass: bool,
    captions: &'a CaptionSet,
}

#[derive(Serialize)]
struct SpeakerCaptionLine<'a> {
    r#type: &'static str,
    speaker_id: &'a str,
    captions: &'a CaptionSet,
}

#[derive(Serialize)]
struct TurnLine<'a> {
    turn_index: usize,
    speaker_id: &'a str,
    utterance_id: &'a str,
}

#[derive(Serialize)]
struct SessionLine<'a> {
    r#type: &'static str,
    session_id: &'a str,
    turns: Vec<TurnLine<'a>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSummary {
    pub n_utterances: usize,
    pub n_sessions: usize,
}

/// Writes the full fixture corpus under `dir`: `audio/`, `manifest.jsonl`,
/// `annotations.jsonl`, evaluation fixtures, and `config.toml`.
pub fn write_fixture_corpus(dir: impl AsRef<Path>, seed: u64) -> Result<FixtureSummary> {
    let dir = dir.as_ref();
    let audio_dir = dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(audio_dir.display().to_string(), e))?;

    struct Utt {
        id: String,
        speaker: &'static str,
        text: &'static str,
        quality_pass: bool,
        captions: CaptionSet,
    }

    let mut utterances: Vec<Utt> = Vec::new();
    let mut session_turns: Vec<(String, Vec<(usize, &'static str, String)>)> = Vec::new();

    // session s001: 25 alternating turns, all passing
    let mut turns = Vec::new();
    for (i, text) in TURN_TEXTS.iter().enumerate() {
        let speaker = if i % 2 == 0 { "spk_a" } else { "spk_b" };
        let id = format!("s001_t{i:03}");
        turns.push((i, speaker, id.clone()));
        utterances.push(Utt {
            id,
            speaker,
            text,
            quality_pass: true,
            captions: CaptionSet {
                level: CaptionLevel::Utterance,
                ..utterance_caption("tmp", &style_for(i, seed))
            },
        });
    }
    session_turns.push(("s001".to_string(), turns));

    // session s002: 8 turns, one failing spk_b turn → only spk_a eligible
    let mut turns = Vec::new();
    for (i, text) in SHORT_TEXTS.iter().enumerate() {
        let speaker = if i % 2 == 0 { "spk_a" } else { "spk_b" };
        let id = format!("s002_t{i:03}");
        turns.push((i, speaker, id.clone()));
        utterances.push(Utt {
            id,
            speaker,
            text,
            quality_pass: i != 3,
            captions: CaptionSet {
                level: CaptionLevel::Utterance,
                ..utterance_caption("tmp", &style_for(100 + i, seed))
            },
        });
    }
    session_turns.push(("s002".to_string(), turns));

    // standalone utterances; one failing, one left unannotated
    for (i, text) in SOLO_TEXTS.iter().enumerate() {
        let speaker = if i < 3 { "spk_a" } else { "spk_b" };
        let id = format!("solo_{:02}", i);
        utterances.push(Utt {
            id,
            speaker,
            text,
            quality_pass: i != 2,
            captions: CaptionSet {
                level: CaptionLevel::Utterance,
                ..utterance_caption("tmp", &style_for(200 + i, seed))
            },
        });
    }

    // regenerate captions with the real ids and synthesize audio
    let mut manifest_lines: Vec<String> = Vec::new();
    for (index, utt) in utterances.iter_mut().enumerate() {
        let style = style_for(index, seed);
        utt.captions = utterance_caption(&utt.id, &style);
        let voice = if utt.speaker == "spk_a" { VOICE_A } else { VOICE_B };
        let wave = synthesize_utterance(&voice, &style, utt.text, mix_seed(seed, &utt.id));
        write_wav_i16(audio_dir.join(format!("{}.wav", utt.id)), &wave)?;

        manifest_lines.push(serde_json::to_string(&UtteranceLine {
            r#type: "utterance",
            utterance_id: &utt.id,
            speaker_id: utt.speaker,
            text: utt.text,
            audio: format!("audio/{}.wav", utt.id),
            quality_pass: utt.quality_pass,
            captions: &utt.captions,
        })?);
    }

    for speaker in ["spk_a", "spk_b"] {
        manifest_lines.push(serde_json::to_string(&SpeakerCaptionLine {
            r#type: "speaker_caption",
            speaker_id: speaker,
            captions: &speaker_caption(speaker),
        })?);
    }

    for (session_id, turns) in &session_turns {
        manifest_lines.push(serde_json::to_string(&SessionLine {
            r#type: "session",
            session_id,
            turns: turns
                .iter()
                .map(|(i, speaker, id)| TurnLine {
                    turn_index: *i,
                    speaker_id: speaker,
                    utterance_id: id,
                })
                .collect(),
        })?);
    }

    write_lines(&dir.join("manifest.jsonl"), &manifest_lines)?;

    // annotations: every utterance except solo_05, vocab entries cycled
    let vocab = crate::cot::CotVocab::default();
    let mut annotation_lines = Vec::new();
    for (i, utt) in utterances.iter().enumerate() {
        if utt.id == "solo_05" {
            continue;
        }
        annotation_lines.push(serde_json::to_string(&serde_json::json!({
            "utterance_id": utt.id,
            "emotion": vocab.emotions[i % vocab.emotions.len()],
            "tone": vocab.tones[i % vocab.tones.len()],
        }))?);
    }
    write_lines(&dir.join("annotations.jsonl"), &annotation_lines)?;

    write_eval_fixtures(dir)?;
    write_config(dir)?;

    Ok(FixtureSummary {
        n_utterances: utterances.len(),
        n_sessions: session_turns.len(),
    })
}

fn write_eval_fixtures(dir: &Path) -> Result<()> {
    // judgments: 8 records, emotion true on 6, others true on 7, overall only
    // when every attribute is true
    let mut lines = Vec::new();
    for i in 0..8 {
        let emotion = i != 1 && i != 5;
        let tone = i != 2;
        let all = emotion && tone;
        lines.push(serde_json::to_string(&serde_json::json!({
            "sample_id": format!("j{i:02}"),
            "emotion": emotion,
            "tone": tone,
            "pitch": true,
            "energy": true,
            "speed": true,
            "overall": all,
        }))?);
    }
    write_lines(&dir.join("judgments.jsonl"), &lines)?;

    // votes: 6 items × 3 raters, majority a on 4 items
    let mut lines = Vec::new();
    for item in 0..6 {
        for rater in 0..3 {
            let choice = if item < 4 {
                if rater < 2 { "a" } else { "b" }
            } else if rater < 1 {
                "a"
            } else {
                "b"
            };
            lines.push(serde_json::to_string(&serde_json::json!({
                "item_id": format!("pair{item:02}"),
                "rater": format!("rater{rater}"),
                "choice": choice,
            }))?);
        }
    }
    write_lines(&dir.join("votes.jsonl"), &lines)?;

    // controllability pairs: mostly successful nudges
    let pairs = [
        ("pitch", "up", "normal", "slightly high"),
        ("pitch", "up", "normal", "noticeably high"),
        ("pitch", "down", "normal", "slightly low"),
        ("pitch", "up", "normal", "normal"),
        ("energy", "up", "normal", "noticeably louder"),
        ("energy", "down", "slightly louder", "normal"),
        ("speed", "up", "normal", "slightly faster"),
        ("speed", "down", "normal", "slightly slower"),
    ];
    let mut lines = Vec::new();
    for (attribute, direction, before, after) in pairs {
        lines.push(serde_json::to_string(&serde_json::json!({
            "attribute": attribute,
            "direction": direction,
            "bin_before": bin_name(attribute, before),
            "bin_after": bin_name(attribute, after),
        }))?);
    }
    write_lines(&dir.join("pairs.jsonl"), &lines)?;
    Ok(())
}

/// Maps a rendered bin phrase back to the serialized enum name.
fn bin_name(attribute: &str, phrase: &str) -> String {
    use crate::cot::{ProsodyAttribute, ProsodyBin};
    let attr = match attribute {
        "pitch" => ProsodyAttribute::Pitch,
        "energy" => ProsodyAttribute::Energy,
        _ => ProsodyAttribute::Speed,
    };
    let bin = ProsodyBin::parse(phrase, attr).expect("fixture phrases are valid");
    serde_json::to_value(bin).unwrap().as_str().unwrap().to_string()
}

fn write_config(dir: &Path) -> Result<()> {
    let text = "\
seed = 42

[paths]
manifest = \"manifest.jsonl\"
annotations = \"annotations.jsonl\"
out_dir = \"out\"

[corpus]
window = 20
stride = 10

[seqlayout]
lambda_kl_z2 = 0.1
lambda_kl_z1 = 0.1

[fhvae]
d1 = 2
hidden = 48
epochs = 150
step = 0.05

[eval]
reuse_speaker = \"spk_a\"
reuse_utterances = 8
reuse_segments = 4
caption_noise = 1.0
";
    let path = dir.join("config.toml");
    std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    for line in lines {
        writeln!(file, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusManifest;

    #[test]
    fn fixture_corpus_is_deterministic_and_loadable() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let summary_a = write_fixture_corpus(dir_a.path(), 42).unwrap();
        let summary_b = write_fixture_corpus(dir_b.path(), 42).unwrap();
        assert_eq!(summary_a, summary_b);
        assert_eq!(summary_a.n_utterances, 39);
        assert_eq!(summary_a.n_sessions, 2);

        let bytes_a = std::fs::read(dir_a.path().join("manifest.jsonl")).unwrap();
        let bytes_b = std::fs::read(dir_b.path().join("manifest.jsonl")).unwrap();
        assert_eq!(bytes_a, bytes_b);

        let wav_a = std::fs::read(dir_a.path().join("audio/s001_t000.wav")).unwrap();
        let wav_b = std::fs::read(dir_b.path().join("audio/s001_t000.wav")).unwrap();
        assert_eq!(wav_a, wav_b);

        let manifest = CorpusManifest::load(dir_a.path().join("manifest.jsonl")).unwrap();
        assert_eq!(manifest.sessions.len(), 2);
        assert_eq!(manifest.utterances.len(), 39);
        assert_eq!(manifest.speaker_captions.len(), 2);
    }

    #[test]
    fn synthesized_voices_have_distinct_pitch() {
        use crate::cot::utterance_stats;
        use crate::dsp::DspConfig;

        let style = StyleSpec {
            pitch_offset_st: 0.0,
            amplitude: 0.4,
            gap_scale: 1.0,
        };
        let cfg = DspConfig::default();
        let a = synthesize_utterance(&VOICE_A, &style, "a steady line of words here", 1);
        let b = synthesize_utterance(&VOICE_B, &style, "a steady line of words here", 1);
        let sa = utterance_stats(&a, "a steady line of words here", &cfg)
            .unwrap()
            .unwrap();
        let sb = utterance_stats(&b, "a steady line of words here", &cfg)
            .unwrap()
            .unwrap();
        // 150 vs 255 Hz is about 9 semitones apart
        assert!(sb.semitone - sa.semitone > 6.0, "{} vs {}", sa.semitone, sb.semitone);
    }
}
