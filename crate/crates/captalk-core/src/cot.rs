//! Turn-level control labels: `<emotion><tone><pitch><energy><speed>`.
//!
//! Emotion and tone are ingested from annotation files; pitch, energy, and
//! speaking rate are computed relative to each speaker's own baseline and
//! discretized into seven ordered levels. Prosody here is speaker-internal:
//! the same utterance can be "slightly high" for one speaker and "normal"
//! for another.

use crate::dsp::{
    estimate_f0, hz_to_semitone, rms_energy, vad, DspConfig, VoicingMask, Waveform,
};
use crate::error::{Error, Result};
use crate::num::{median, Real};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

/// Seven ordered deviation levels; `Normal` is the middle one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProsodyBin {
    ExtremelyLow,
    NoticeablyLow,
    SlightlyLow,
    Normal,
    SlightlyHigh,
    NoticeablyHigh,
    ExtremelyHigh,
}

impl ProsodyBin {
    /// 0..=6 with `Normal` at 3.
    pub fn level_index(self) -> usize {
        match self {
            ProsodyBin::ExtremelyLow => 0,
            ProsodyBin::NoticeablyLow => 1,
            ProsodyBin::SlightlyLow => 2,
            ProsodyBin::Normal => 3,
            ProsodyBin::SlightlyHigh => 4,
            ProsodyBin::NoticeablyHigh => 5,
            ProsodyBin::ExtremelyHigh => 6,
        }
    }

    pub const ALL: [ProsodyBin; 7] = [
        ProsodyBin::ExtremelyLow,
        ProsodyBin::NoticeablyLow,
        ProsodyBin::SlightlyLow,
        ProsodyBin::Normal,
        ProsodyBin::SlightlyHigh,
        ProsodyBin::NoticeablyHigh,
        ProsodyBin::ExtremelyHigh,
    ];

    /// Rendered with the attribute's own word pair, e.g. `noticeably louder`.
    pub fn render(self, attribute: ProsodyAttribute) -> String {
        let (low, high) = attribute.word_pair();
        let (severity, side) = match self {
            ProsodyBin::Normal => return "normal".to_string(),
            ProsodyBin::SlightlyLow => ("slightly", low),
            ProsodyBin::SlightlyHigh => ("slightly", high),
            ProsodyBin::NoticeablyLow => ("noticeably", low),
            ProsodyBin::NoticeablyHigh => ("noticeably", high),
            ProsodyBin::ExtremelyLow => ("extremely", low),
            ProsodyBin::ExtremelyHigh => ("extremely", high),
        };
        format!("{severity} {side}")
    }

    /// Inverse of [`render`](Self::render).
    pub fn parse(s: &str, attribute: ProsodyAttribute) -> Result<Self> {
        for bin in Self::ALL {
            if bin.render(attribute) == s {
                return Ok(bin);
            }
        }
        Err(Error::MalformedLabel(s.to_string()))
    }
}

/// Which prosody axis a bin describes; selects the rendered word pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProsodyAttribute {
    Pitch,
    Energy,
    Speed,
}

impl ProsodyAttribute {
    fn word_pair(self) -> (&'static str, &'static str) {
        match self {
            ProsodyAttribute::Pitch => ("low", "high"),
            ProsodyAttribute::Energy => ("quieter", "louder"),
            ProsodyAttribute::Speed => ("slower", "faster"),
        }
    }
}

/// Three strictly ascending positive boundaries between `Normal`,
/// `Slightly`, `Noticeably`, and `Extremely`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BinThresholds<F> {
    pub t1: F,
    pub t2: F,
    pub t3: F,
}

impl<F: Real> BinThresholds<F> {
    pub fn new(t1: F, t2: F, t3: F) -> Result<Self> {
        if !(F::zero() < t1 && t1 < t2 && t2 < t3) || !t3.is_finite() {
            return Err(Error::BadThresholds([
                t1.to_f64().unwrap_or(f64::NAN),
                t2.to_f64().unwrap_or(f64::NAN),
                t3.to_f64().unwrap_or(f64::NAN),
            ]));
        }
        Ok(Self { t1, t2, t3 })
    }

    /// Semitone deviation boundaries for pitch.
    pub fn default_pitch() -> Self {
        Self::new(F::from_f64_c(1.0), F::from_f64_c(3.0), F::from_f64_c(6.0)).unwrap()
    }

    /// dB deviation boundaries for energy.
    pub fn default_energy() -> Self {
        Self::new(F::from_f64_c(1.5), F::from_f64_c(4.0), F::from_f64_c(8.0)).unwrap()
    }

    /// |log2 rate ratio| boundaries for speed.
    pub fn default_speed() -> Self {
        Self::new(F::from_f64_c(0.15), F::from_f64_c(0.4), F::from_f64_c(0.8)).unwrap()
    }
}

/// Maps a signed deviation to its bin. The lower bound of each severity is
/// inclusive, so the map is total and monotone in the deviation.
pub fn discretize<F: Real>(deviation: F, thresholds: BinThresholds<F>) -> ProsodyBin {
    let mag = deviation.abs();
    let high = deviation >= F::zero();
    if mag < thresholds.t1 {
        ProsodyBin::Normal
    } else if mag < thresholds.t2 {
        if high {
            ProsodyBin::SlightlyHigh
        } else {
            ProsodyBin::SlightlyLow
        }
    } else if mag < thresholds.t3 {
        if high {
            ProsodyBin::NoticeablyHigh
        } else {
            ProsodyBin::NoticeablyLow
        }
    } else if high {
        ProsodyBin::ExtremelyHigh
    } else {
        ProsodyBin::ExtremelyLow
    }
}

/// Character count after removing whitespace and all punctuation/symbol
/// Unicode categories; the numerator of the speaking rate.
pub fn char_count(text: &str) -> usize {
    text.chars()
        .filter(|c| {
            !c.is_whitespace()
                && !matches!(
                    c.general_category_group(),
                    GeneralCategoryGroup::Punctuation | GeneralCategoryGroup::Symbol
                )
        })
        .count()
}

/// Per-speaker medians that anchor the relative prosody computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeakerBaseline<F> {
    pub speaker_id: String,
    /// Median over utterances of the semitone of the median voiced F0.
    pub median_semitone: F,
    /// Median over utterances of the voiced-only RMS.
    pub median_rms: F,
    /// Median over utterances of characters per voiced second.
    pub median_rate: F,
    /// Utterances that contributed (excluded ones are not counted).
    pub n_utterances: usize,
}

/// Per-utterance prosody statistics feeding both the baseline and the labels.
#[derive(Debug, Clone, Copy)]
pub struct UtteranceStats<F> {
    pub semitone: F,
    pub rms: F,
    /// Characters per voiced second.
    pub rate: F,
    pub voiced_sec: F,
}

/// Computes the per-utterance statistics, or `None` when the utterance has
/// no usable voiced speech (no voiced frames, no confident pitch, or an
/// empty text).
pub fn utterance_stats<F: Real>(
    w: &Waveform<F>,
    text: &str,
    cfg: &DspConfig<F>,
) -> Result<Option<UtteranceStats<F>>> {
    let mask = vad(w, cfg)?;
    if mask.n_voiced() == 0 {
        return Ok(None);
    }
    let track = estimate_f0(w, &mask, cfg)?;
    let Some(f0) = track.median_f0() else {
        return Ok(None);
    };
    let chars = char_count(text);
    let voiced_sec = mask.voiced_sec();
    if chars == 0 || voiced_sec <= F::zero() {
        return Ok(None);
    }
    Ok(Some(UtteranceStats {
        semitone: hz_to_semitone(f0)?,
        rms: rms_energy(w, &mask)?,
        rate: F::from_f64_c(chars as f64) / voiced_sec,
        voiced_sec,
    }))
}

/// Outcome of a baseline computation; `skipped` lists the indices of
/// utterances excluded for having no usable voiced speech.
#[derive(Debug, Clone)]
pub struct BaselineResult<F> {
    pub baseline: SpeakerBaseline<F>,
    pub skipped: Vec<usize>,
}

/// Medians over per-utterance statistics for one speaker.
pub fn speaker_baseline<F: Real>(
    speaker_id: &str,
    utts: &[(&Waveform<F>, &str)],
    cfg: &DspConfig<F>,
) -> Result<BaselineResult<F>> {
    if utts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut stats = Vec::new();
    let mut skipped = Vec::new();
    for (idx, (w, text)) in utts.iter().enumerate() {
        match utterance_stats(w, text, cfg)? {
            Some(s) => stats.push(s),
            None => skipped.push(idx),
        }
    }
    if stats.is_empty() {
        return Err(Error::NoVoicedSpeech);
    }
    Ok(BaselineResult {
        baseline: baseline_from_stats(speaker_id, &stats),
        skipped,
    })
}

/// The pure reduction step: medians of the per-utterance statistics.
pub fn baseline_from_stats<F: Real>(
    speaker_id: &str,
    stats: &[UtteranceStats<F>],
) -> SpeakerBaseline<F> {
    let semitones: Vec<F> = stats.iter().map(|s| s.semitone).collect();
    let rmses: Vec<F> = stats.iter().map(|s| s.rms).collect();
    let rates: Vec<F> = stats.iter().map(|s| s.rate).collect();
    SpeakerBaseline {
        speaker_id: speaker_id.to_string(),
        median_semitone: median(&semitones).unwrap(),
        median_rms: median(&rmses).unwrap(),
        median_rate: median(&rates).unwrap(),
        n_utterances: stats.len(),
    }
}

/// Pitch bin from the semitone deviation against the speaker baseline.
pub fn pitch_bin<F: Real>(
    semitone: F,
    base: &SpeakerBaseline<F>,
    thresholds: BinThresholds<F>,
) -> ProsodyBin {
    discretize(semitone - base.median_semitone, thresholds)
}

/// Energy bin from the dB ratio of utterance RMS to the baseline median RMS.
pub fn energy_bin<F: Real>(
    rms: F,
    base: &SpeakerBaseline<F>,
    thresholds: BinThresholds<F>,
) -> ProsodyBin {
    let twenty = F::from_f64_c(20.0);
    discretize(twenty * (rms / base.median_rms).log10(), thresholds)
}

/// Speed bin from the log2 ratio of the utterance rate to the baseline rate.
pub fn speed_bin<F: Real>(
    rate: F,
    base: &SpeakerBaseline<F>,
    thresholds: BinThresholds<F>,
) -> ProsodyBin {
    discretize((rate / base.median_rate).log2(), thresholds)
}

pub fn pitch_label<F: Real>(
    w: &Waveform<F>,
    base: &SpeakerBaseline<F>,
    cfg: &DspConfig<F>,
    thresholds: BinThresholds<F>,
) -> Result<ProsodyBin> {
    let mask = vad(w, cfg)?;
    let f0 = estimate_f0(w, &mask, cfg)?
        .median_f0()
        .ok_or(Error::NoVoicedSpeech)?;
    Ok(pitch_bin(hz_to_semitone(f0)?, base, thresholds))
}

pub fn energy_label<F: Real>(
    w: &Waveform<F>,
    base: &SpeakerBaseline<F>,
    cfg: &DspConfig<F>,
    thresholds: BinThresholds<F>,
) -> Result<ProsodyBin> {
    let mask = vad(w, cfg)?;
    Ok(energy_bin(rms_energy(w, &mask)?, base, thresholds))
}

pub fn speed_label<F: Real>(
    text: &str,
    voiced_sec: F,
    base: &SpeakerBaseline<F>,
    thresholds: BinThresholds<F>,
) -> Result<ProsodyBin> {
    let chars = char_count(text);
    if chars == 0 || voiced_sec <= F::zero() {
        return Err(Error::NoVoicedSpeech);
    }
    Ok(speed_bin(
        F::from_f64_c(chars as f64) / voiced_sec,
        base,
        thresholds,
    ))
}

/// Also exposes the mask so callers can reuse `voiced_sec`.
pub fn voicing<F: Real>(w: &Waveform<F>, cfg: &DspConfig<F>) -> Result<VoicingMask<F>> {
    vad(w, cfg)
}

/// Configured emotion and tone vocabularies.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CotVocab {
    pub emotions: Vec<String>,
    pub tones: Vec<String>,
}

impl Default for CotVocab {
    fn default() -> Self {
        Self {
            emotions: ["neutral", "happy", "sad", "angry", "surprised", "fearful", "disgusted"]
                .map(String::from)
                .to_vec(),
            tones: ["statement", "question", "exclamation", "comfort", "tease", "command"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl CotVocab {
    pub fn check_emotion(&self, emotion: &str) -> Result<()> {
        if self.emotions.iter().any(|e| e == emotion) {
            Ok(())
        } else {
            Err(Error::UnknownVocabEntry {
                attribute: "emotion",
                value: emotion.to_string(),
                vocabulary: self.emotions.clone(),
            })
        }
    }

    pub fn check_tone(&self, tone: &str) -> Result<()> {
        if self.tones.iter().any(|t| t == tone) {
            Ok(())
        } else {
            Err(Error::UnknownVocabEntry {
                attribute: "tone",
                value: tone.to_string(),
                vocabulary: self.tones.clone(),
            })
        }
    }
}

/// The five-attribute control label in its fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoTLabel {
    pub emotion: String,
    pub tone: String,
    pub pitch: ProsodyBin,
    pub energy: ProsodyBin,
    pub speed: ProsodyBin,
}

/// Validates the vocabulary entries and assembles the label.
pub fn assemble_cot(
    emotion: &str,
    tone: &str,
    pitch: ProsodyBin,
    energy: ProsodyBin,
    speed: ProsodyBin,
    vocab: &CotVocab,
) -> Result<CoTLabel> {
    vocab.check_emotion(emotion)?;
    vocab.check_tone(tone)?;
    Ok(CoTLabel {
        emotion: emotion.to_string(),
        tone: tone.to_string(),
        pitch,
        energy,
        speed,
    })
}

impl CoTLabel {
    /// Fixed-order serialization: `<emotion><tone><pitch><energy><speed>`.
    pub fn serialize(&self) -> String {
        format!(
            "<{}><{}><{}><{}><{}>",
            self.emotion,
            self.tone,
            self.pitch.render(ProsodyAttribute::Pitch),
            self.energy.render(ProsodyAttribute::Energy),
            self.speed.render(ProsodyAttribute::Speed)
        )
    }

    pub fn parse(s: &str, vocab: &CotVocab) -> Result<Self> {
        let inner = s
            .strip_prefix('<')
            .and_then(|s| s.strip_suffix('>'))
            .ok_or_else(|| Error::MalformedLabel(s.to_string()))?;
        let fields: Vec<&str> = inner.split("><").collect();
        if fields.len() != 5 {
            return Err(Error::MalformedLabel(s.to_string()));
        }
        assemble_cot(
            fields[0],
            fields[1],
            ProsodyBin::parse(fields[2], ProsodyAttribute::Pitch)?,
            ProsodyBin::parse(fields[3], ProsodyAttribute::Energy)?,
            ProsodyBin::parse(fields[4], ProsodyAttribute::Speed)?,
            vocab,
        )
    }
}

/// Emotion/tone annotations keyed by utterance id, ingested from a
/// line-delimited file of `{utterance_id, emotion, tone}` records.
#[derive(Debug, Clone, Default)]
pub struct Annotations {
    map: BTreeMap<String, (String, String)>,
}

#[derive(Deserialize)]
struct AnnotationRecord {
    utterance_id: String,
    emotion: String,
    tone: String,
}

impl Annotations {
    pub fn load(path: impl AsRef<Path>, vocab: &CotVocab) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let reader = std::io::BufReader::new(file);
        let mut map = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: AnnotationRecord =
                serde_json::from_str(&line).map_err(|e| Error::Manifest {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            vocab.check_emotion(&rec.emotion)?;
            vocab.check_tone(&rec.tone)?;
            map.insert(rec.utterance_id, (rec.emotion, rec.tone));
        }
        Ok(Self { map })
    }

    pub fn get(&self, utterance_id: &str) -> Option<(&str, &str)> {
        self.map
            .get(utterance_id)
            .map(|(e, t)| (e.as_str(), t.as_str()))
    }

    /// Every annotated id must exist in the corpus.
    pub fn check_ids_exist(&self, known: &std::collections::BTreeSet<String>) -> Result<()> {
        for id in self.map.keys() {
            if !known.contains(id) {
                return Err(Error::Manifest {
                    line: 0,
                    reason: format!("annotation references unknown utterance_id {id:?}"),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::testsig;
    use approx::assert_abs_diff_eq;

    fn th(t1: f64, t2: f64, t3: f64) -> BinThresholds<f64> {
        BinThresholds::new(t1, t2, t3).unwrap()
    }

    #[test]
    fn char_count_strips_punctuation_symbols_whitespace() {
        assert_eq!(char_count("你好， 世界"), 4);
        assert_eq!(char_count("Hello, world!"), 10);
        assert_eq!(char_count(""), 0);
        assert_eq!(char_count("a+b=c"), 3); // math symbols stripped
    }

    #[test]
    fn discretize_examples() {
        let t = th(1.0, 3.0, 6.0);
        assert_eq!(discretize(0.0, t), ProsodyBin::Normal);
        assert_eq!(discretize(-5.0, t), ProsodyBin::NoticeablyLow);
        // lower bound inclusive for the higher-severity bin
        assert_eq!(discretize(6.0, t), ProsodyBin::ExtremelyHigh);
        assert_eq!(discretize(1.0, t), ProsodyBin::SlightlyHigh);
        assert_eq!(discretize(-1.0, t), ProsodyBin::SlightlyLow);
    }

    #[test]
    fn discretize_rejects_bad_thresholds() {
        assert!(BinThresholds::new(3.0, 1.0, 6.0).is_err());
        assert!(BinThresholds::new(0.0, 1.0, 2.0).is_err());
        assert!(BinThresholds::new(1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn discretize_monotone_and_total_on_dense_grid() {
        let t = th(1.0, 3.0, 6.0);
        let mut prev: Option<ProsodyBin> = None;
        let mut n = 0;
        let mut x = -8.0;
        while x <= 8.0 {
            let bin = discretize(x, t);
            if let Some(p) = prev {
                assert!(p <= bin, "not monotone at {x}");
            }
            prev = Some(bin);
            n += 1;
            x += 0.001;
        }
        assert!(n > 15_000);
    }

    #[test]
    fn baseline_median_rules() {
        let mk = |semitone: f64, rms: f64, rate: f64| UtteranceStats {
            semitone,
            rms,
            rate,
            voiced_sec: 1.0,
        };
        let stats = [mk(0.0, 0.2, 2.0), mk(1.0, 0.4, 4.0), mk(2.0, 0.6, 3.0)];
        let base = baseline_from_stats("spk", &stats);
        assert_eq!(base.median_rms, 0.4);
        assert_eq!(base.median_rate, 3.0);
        assert_eq!(base.n_utterances, 3);

        // even count: mean of the two central order statistics
        let stats = [mk(0.0, 0.1, 2.0), mk(0.0, 0.3, 4.0)];
        let base = baseline_from_stats("spk", &stats);
        assert_eq!(base.median_rate, 3.0);
        assert_eq!(base.median_rms, 0.2);
    }

    #[test]
    fn baseline_on_reference_tone_is_zero_semitones() {
        let w = testsig::sine::<f64>(440.0, 0.5, 1.0);
        let cfg = DspConfig::default();
        let text = "aaaa bbbb";
        let result = speaker_baseline("spk", &[(&w, text)], &cfg).unwrap();
        assert!(result.skipped.is_empty());
        assert_abs_diff_eq!(result.baseline.median_semitone, 0.0, epsilon = 0.02);
        assert_eq!(result.baseline.n_utterances, 1);
    }

    #[test]
    fn baseline_skips_silent_utterances_and_errors_when_all_skipped() {
        let tone = testsig::sine::<f64>(220.0, 0.5, 0.6);
        let quiet = testsig::silence::<f64>(0.6);
        let cfg = DspConfig::default();
        let result =
            speaker_baseline("spk", &[(&tone, "hello there"), (&quiet, "hi")], &cfg).unwrap();
        assert_eq!(result.skipped, vec![1]);
        assert_eq!(result.baseline.n_utterances, 1);

        assert!(speaker_baseline("spk", &[(&quiet, "hi")], &cfg).is_err());
        assert!(speaker_baseline::<f64>("spk", &[], &cfg).is_err());
    }

    fn base_at_zero() -> SpeakerBaseline<f64> {
        SpeakerBaseline {
            speaker_id: "spk".into(),
            median_semitone: 0.0,
            median_rms: 0.1,
            median_rate: 5.0,
            n_utterances: 3,
        }
    }

    #[test]
    fn pitch_bins_from_deviation() {
        let base = base_at_zero();
        let t = BinThresholds::default_pitch();
        assert_eq!(pitch_bin(0.0, &base, t), ProsodyBin::Normal);
        assert_eq!(pitch_bin(12.0, &base, t), ProsodyBin::ExtremelyHigh);
        // 493.9 Hz is about +2.0 semitones
        let st = hz_to_semitone(493.9f64).unwrap();
        assert_eq!(pitch_bin(st, &base, t), ProsodyBin::SlightlyHigh);
    }

    #[test]
    fn energy_bins_from_db_ratio() {
        let base = base_at_zero();
        let t = BinThresholds::default_energy();
        assert_eq!(energy_bin(0.1, &base, t), ProsodyBin::Normal);
        assert_eq!(energy_bin(0.2, &base, t), ProsodyBin::NoticeablyHigh); // +6.02 dB
        assert_eq!(energy_bin(0.01, &base, t), ProsodyBin::ExtremelyLow); // -20 dB
    }

    #[test]
    fn speed_bins_from_log2_ratio() {
        let base = base_at_zero();
        let t = BinThresholds::default_speed();
        assert_eq!(speed_bin(5.0, &base, t), ProsodyBin::Normal);
        assert_eq!(speed_bin(10.0, &base, t), ProsodyBin::ExtremelyHigh); // log2 = 1
        assert_eq!(speed_bin(4.0, &base, t), ProsodyBin::SlightlyLow); // log2 ≈ -0.322
    }

    #[test]
    fn speed_label_rejects_empty_inputs() {
        let base = base_at_zero();
        let t = BinThresholds::default_speed();
        assert!(speed_label("", 1.0, &base, t).is_err());
        assert!(speed_label("hello", 0.0, &base, t).is_err());
    }

    #[test]
    fn single_utterance_speaker_is_all_normal() {
        let w = testsig::sine::<f64>(230.0, 0.4, 0.8);
        let cfg = DspConfig::default();
        let result = speaker_baseline("solo", &[(&w, "only line here")], &cfg).unwrap();
        let base = &result.baseline;
        let stats = utterance_stats(&w, "only line here", &cfg).unwrap().unwrap();
        assert_eq!(
            pitch_bin(stats.semitone, base, BinThresholds::default_pitch()),
            ProsodyBin::Normal
        );
        assert_eq!(
            energy_bin(stats.rms, base, BinThresholds::default_energy()),
            ProsodyBin::Normal
        );
        assert_eq!(
            speed_bin(stats.rate, base, BinThresholds::default_speed()),
            ProsodyBin::Normal
        );
    }

    #[test]
    fn cot_label_serializes_in_fixed_order() {
        let vocab = CotVocab::default();
        let label = assemble_cot(
            "neutral",
            "statement",
            ProsodyBin::Normal,
            ProsodyBin::Normal,
            ProsodyBin::Normal,
            &vocab,
        )
        .unwrap();
        assert_eq!(
            label.serialize(),
            "<neutral><statement><normal><normal><normal>"
        );

        let fancy = assemble_cot(
            "happy",
            "question",
            ProsodyBin::SlightlyHigh,
            ProsodyBin::NoticeablyHigh,
            ProsodyBin::ExtremelyLow,
            &vocab,
        )
        .unwrap();
        assert_eq!(
            fancy.serialize(),
            "<happy><question><slightly high><noticeably louder><extremely slower>"
        );
    }

    #[test]
    fn unknown_emotion_is_rejected_with_vocabulary() {
        let vocab = CotVocab::default();
        let err = assemble_cot(
            "joyfulness",
            "statement",
            ProsodyBin::Normal,
            ProsodyBin::Normal,
            ProsodyBin::Normal,
            &vocab,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("joyfulness") && msg.contains("neutral"));
    }

    #[test]
    fn scaling_every_utterance_preserves_energy_labels() {
        let cfg = DspConfig::default();
        let amps = [0.15, 0.3, 0.45, 0.62];
        let texts = ["first line", "second line", "third line", "fourth line"];
        let t = BinThresholds::default_energy();

        let label_set = |c: f64| -> Vec<ProsodyBin> {
            let waves: Vec<_> = amps
                .iter()
                .map(|a| testsig::sine::<f64>(180.0, a * c, 0.5))
                .collect();
            let utts: Vec<(&Waveform<f64>, &str)> =
                waves.iter().zip(texts).map(|(w, t)| (w, t)).collect();
            let base = speaker_baseline("spk", &utts, &cfg).unwrap().baseline;
            waves
                .iter()
                .map(|w| energy_label(w, &base, &cfg, t).unwrap())
                .collect()
        };

        let reference = label_set(1.0);
        assert_eq!(reference, label_set(0.5));
        assert_eq!(reference, label_set(1.6));
    }

    #[test]
    fn transposing_a_speaker_one_octave_preserves_pitch_labels() {
        let cfg = DspConfig::default();
        let freqs = [200.0, 210.0, 220.0];
        let texts = ["one two three", "four five six", "seven eight nine"];
        let t = BinThresholds::default_pitch();

        let label_set = |mult: f64| -> Vec<ProsodyBin> {
            let waves: Vec<_> = freqs
                .iter()
                .map(|f| testsig::sine::<f64>(f * mult, 0.4, 0.6))
                .collect();
            let utts: Vec<(&Waveform<f64>, &str)> =
                waves.iter().zip(texts).map(|(w, t)| (w, t)).collect();
            let base = speaker_baseline("spk", &utts, &cfg).unwrap().baseline;
            waves
                .iter()
                .map(|w| pitch_label(w, &base, &cfg, t).unwrap())
                .collect()
        };

        assert_eq!(label_set(1.0), label_set(2.0));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn discretize_matches_piecewise_oracle(
                d in -20.0f64..20.0,
                t1 in 0.1f64..2.0,
                step2 in 0.1f64..3.0,
                step3 in 0.1f64..4.0,
            ) {
                let (t2, t3) = (t1 + step2, t1 + step2 + step3);
                let t = BinThresholds::new(t1, t2, t3).unwrap();
                let got = discretize(d, t);

                let mag = d.abs();
                let severity = if mag < t1 { 0 } else if mag < t2 { 1 } else if mag < t3 { 2 } else { 3 };
                let expected_index = if severity == 0 {
                    3
                } else if d >= 0.0 {
                    3 + severity
                } else {
                    3 - severity
                };
                prop_assert_eq!(got.level_index(), expected_index);
            }

            #[test]
            fn label_roundtrip(e in 0usize..7, tn in 0usize..6, p in 0usize..7, en in 0usize..7, sp in 0usize..7) {
                let vocab = CotVocab::default();
                let label = assemble_cot(
                    &vocab.emotions[e].clone(),
                    &vocab.tones[tn].clone(),
                    ProsodyBin::ALL[p],
                    ProsodyBin::ALL[en],
                    ProsodyBin::ALL[sp],
                    &vocab,
                ).unwrap();
                let back = CoTLabel::parse(&label.serialize(), &vocab).unwrap();
                prop_assert_eq!(back, label);
            }

            #[test]
            fn energy_labels_invariant_under_common_scaling(c in 0.05f64..5.0) {
                // constant-amplitude signals give exact RMS ratios
                let base = SpeakerBaseline {
                    speaker_id: "s".into(),
                    median_semitone: 0.0,
                    median_rms: 0.1,
                    median_rate: 5.0,
                    n_utterances: 2,
                };
                let scaled = SpeakerBaseline { median_rms: base.median_rms * c, ..base.clone() };
                let t = BinThresholds::default_energy();
                for rms in [0.02f64, 0.1, 0.14, 0.2, 0.9] {
                    prop_assert_eq!(
                        energy_bin(rms, &base, t),
                        energy_bin(rms * c, &scaled, t)
                    );
                }
            }
        }
    }
}
