//! Dataset construction for the single-utterance and dialogue branches:
//! quality filtering, caption attachment, eligible-speaker views, and
//! sliding-window segmentation of long sessions.
//!
//! Building is a pure function of (input, config); instances come out in a
//! deterministic global order so repeated runs serialize byte-identically.

pub mod manifest;

pub use manifest::CorpusManifest;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Default dialogue window, in turns.
pub const DEFAULT_WINDOW: usize = 20;
/// Default stride between window starts (50% overlap).
pub const DEFAULT_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionLevel {
    Utterance,
    Speaker,
}

impl CaptionLevel {
    fn as_str(self) -> &'static str {
        match self {
            CaptionLevel::Utterance => "utterance",
            CaptionLevel::Speaker => "speaker",
        }
    }
}

/// The three caption styles, ordered `Aps < Dsd < Rp` for output sorting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionStyle {
    Aps,
    Dsd,
    Rp,
}

impl CaptionStyle {
    pub const ALL: [CaptionStyle; 3] = [CaptionStyle::Aps, CaptionStyle::Dsd, CaptionStyle::Rp];

    pub fn as_str(self) -> &'static str {
        match self {
            CaptionStyle::Aps => "aps",
            CaptionStyle::Dsd => "dsd",
            CaptionStyle::Rp => "rp",
        }
    }
}

/// All three description styles for one subject (an utterance or a speaker).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionSet {
    pub aps: String,
    pub dsd: String,
    pub rp: String,
    pub level: CaptionLevel,
}

impl CaptionSet {
    pub fn style(&self, style: CaptionStyle) -> &str {
        match style {
            CaptionStyle::Aps => &self.aps,
            CaptionStyle::Dsd => &self.dsd,
            CaptionStyle::Rp => &self.rp,
        }
    }

    fn check_complete(&self) -> Result<()> {
        if self.aps.trim().is_empty() {
            return Err(Error::MissingCaptionStyle("aps"));
        }
        if self.dsd.trim().is_empty() {
            return Err(Error::MissingCaptionStyle("dsd"));
        }
        if self.rp.trim().is_empty() {
            return Err(Error::MissingCaptionStyle("rp"));
        }
        Ok(())
    }
}

/// One corpus atom: audio reference plus text, quality flag, and captions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub text: String,
    /// Audio path, relative to the manifest file.
    pub audio: String,
    pub quality_pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<CaptionSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_index: usize,
    pub speaker_id: String,
    pub utterance: UtteranceRecord,
}

/// A full two-speaker session, the basic unit of the dialogue branch.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogueSession {
    pub session_id: String,
    pub turns: Vec<Turn>,
}

impl DialogueSession {
    /// Validates turn contiguity and the exactly-two-speakers invariant.
    pub fn new(session_id: String, turns: Vec<Turn>) -> Result<Self> {
        for (i, turn) in turns.iter().enumerate() {
            if turn.turn_index != i {
                return Err(Error::InvalidSession {
                    session_id,
                    reason: format!("turn_index {} at position {i} is not contiguous", turn.turn_index),
                });
            }
        }
        let speakers: BTreeSet<&str> = turns.iter().map(|t| t.speaker_id.as_str()).collect();
        if speakers.len() != 2 {
            return Err(Error::InvalidSession {
                session_id,
                reason: format!("expected exactly two speakers, got {}", speakers.len()),
            });
        }
        Ok(Self { session_id, turns })
    }

    pub fn n_turns(&self) -> usize {
        self.turns.len()
    }

    pub fn speakers(&self) -> BTreeSet<String> {
        self.turns.iter().map(|t| t.speaker_id.clone()).collect()
    }
}

/// One (target, context) assignment over a turn window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueView {
    pub session_id: String,
    pub target_speaker_id: String,
    pub context_speaker_id: String,
    /// `[start, end)` in turn indices.
    pub window: (usize, usize),
}

/// How a speaker qualifies as a supervision target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EligibilityRule {
    /// Every one of the speaker's utterances in the session passes.
    AllPass,
    /// At least this fraction of the speaker's utterances passes.
    Fraction(f64),
}

impl Default for EligibilityRule {
    fn default() -> Self {
        EligibilityRule::AllPass
    }
}

impl EligibilityRule {
    /// Parses `"all"` or `"fraction:P"`.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(EligibilityRule::AllPass);
        }
        if let Some(p) = s.strip_prefix("fraction:") {
            let p: f64 = p
                .parse()
                .map_err(|_| Error::Config(format!("bad eligibility fraction {s:?}")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "eligibility fraction must be in [0,1], got {p}"
                )));
            }
            return Ok(EligibilityRule::Fraction(p));
        }
        Err(Error::Config(format!(
            "eligibility must be \"all\" or \"fraction:P\", got {s:?}"
        )))
    }
}

/// Speakers whose session utterances satisfy the quality rule.
pub fn eligible_speakers(s: &DialogueSession, rule: EligibilityRule) -> BTreeSet<String> {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for turn in &s.turns {
        let entry = counts.entry(turn.speaker_id.as_str()).or_insert((0, 0));
        entry.1 += 1;
        if turn.utterance.quality_pass {
            entry.0 += 1;
        }
    }
    counts
        .into_iter()
        .filter(|(_, (pass, total))| match rule {
            EligibilityRule::AllPass => pass == total,
            EligibilityRule::Fraction(p) => *pass as f64 >= p * *total as f64,
        })
        .map(|(spk, _)| spk.to_string())
        .collect()
}

/// One (target, context) pair per eligible speaker, targets in id order.
pub fn expand_views(s: &DialogueSession, rule: EligibilityRule) -> Vec<(String, String)> {
    let eligible = eligible_speakers(s, rule);
    let all = s.speakers();
    eligible
        .into_iter()
        .map(|target| {
            let context = all
                .iter()
                .find(|spk| **spk != target)
                .expect("session has two speakers")
                .clone();
            (target, context)
        })
        .collect()
}

/// Sliding windows over `n_turns`: starts at multiples of `stride` while a
/// full window fits, plus a tail window so the last turns are never dropped.
/// Sessions at or under the window size yield the single window `(0, n)`.
pub fn window_session(n_turns: usize, window: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if n_turns == 0 {
        return Err(Error::EmptyInput);
    }
    if stride == 0 || window == 0 {
        return Err(Error::Config("window and stride must be >= 1".into()));
    }
    if n_turns <= window {
        return Ok(vec![(0, n_turns)]);
    }
    let mut windows = Vec::new();
    let mut start = 0;
    while start + window <= n_turns {
        windows.push((start, start + window));
        start += stride;
    }
    let last_end = windows.last().map(|w| w.1).unwrap_or(0);
    if last_end < n_turns {
        windows.push((n_turns - window, n_turns));
    }
    Ok(windows)
}

/// Checks completeness and level, returning the three `(style, text)` pairs
/// in output order.
pub fn attach_captions(
    caps: &CaptionSet,
    expected_level: CaptionLevel,
) -> Result<[(CaptionStyle, String); 3]> {
    caps.check_complete()?;
    if caps.level != expected_level {
        return Err(Error::CaptionLevelMismatch {
            expected: expected_level.as_str(),
            got: caps.level.as_str(),
        });
    }
    Ok(CaptionStyle::ALL.map(|style| (style, caps.style(style).to_string())))
}

/// One caption-conditioned training instance of the single branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleInstance {
    pub instance_id: String,
    pub utterance_id: String,
    pub speaker_id: String,
    pub style: CaptionStyle,
    pub caption: String,
    pub text: String,
    pub audio: String,
}

/// Per-build tallies surfaced as warnings, never as errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BuildStats {
    pub skipped_missing_captions: usize,
    pub skipped_failed_quality: usize,
    pub dropped_sessions: usize,
    pub skipped_views_missing_captions: usize,
}

/// Quality-filters records, attaches utterance-level captions, and emits
/// instances ordered by `(utterance_id, style)`.
pub fn build_single_dataset(
    records: &[UtteranceRecord],
) -> Result<(Vec<SingleInstance>, BuildStats)> {
    let mut stats = BuildStats::default();
    let mut sorted: Vec<&UtteranceRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));

    let mut out = Vec::new();
    for rec in sorted {
        if !rec.quality_pass {
            stats.skipped_failed_quality += 1;
            continue;
        }
        let Some(caps) = &rec.captions else {
            stats.skipped_missing_captions += 1;
            continue;
        };
        for (style, caption) in attach_captions(caps, CaptionLevel::Utterance)? {
            out.push(SingleInstance {
                instance_id: format!("{}#{}", rec.utterance_id, style.as_str()),
                utterance_id: rec.utterance_id.clone(),
                speaker_id: rec.speaker_id.clone(),
                style,
                caption,
                text: rec.text.clone(),
                audio: rec.audio.clone(),
            });
        }
    }
    Ok((out, stats))
}

/// A turn as carried inside a dialogue instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRef {
    pub turn_index: usize,
    pub speaker_id: String,
    pub utterance_id: String,
    pub text: String,
    pub audio: String,
}

/// One caption-conditioned dialogue training instance: a window of turns,
/// the list of supervised (target-speaker) turns inside it, and the target
/// speaker's caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueInstance {
    pub instance_id: String,
    pub session_id: String,
    pub target_speaker_id: String,
    pub context_speaker_id: String,
    pub window_start: usize,
    pub window_end: usize,
    pub style: CaptionStyle,
    pub caption: String,
    /// Every turn in the window, in turn order.
    pub turns: Vec<TurnRef>,
    /// Absolute indices of the supervised target turns within the window.
    pub target_turns: Vec<usize>,
}

/// Expands sessions into per-window, per-view, per-style instances using
/// speaker-level captions. A `(window, view)` pair with no target turn emits
/// nothing; a session with no eligible speaker is dropped and counted.
pub fn build_dialogue_dataset(
    sessions: &[DialogueSession],
    speaker_captions: &BTreeMap<String, CaptionSet>,
    window: usize,
    stride: usize,
    rule: EligibilityRule,
) -> Result<(Vec<DialogueInstance>, BuildStats)> {
    let mut stats = BuildStats::default();
    let mut sorted: Vec<&DialogueSession> = sessions.iter().collect();
    sorted.sort_by(|a, b| a.session_id.cmp(&b.session_id));

    let mut out = Vec::new();
    for session in sorted {
        let views = expand_views(session, rule);
        if views.is_empty() {
            stats.dropped_sessions += 1;
            continue;
        }
        let windows = window_session(session.n_turns(), window, stride)?;
        for &(start, end) in &windows {
            for (target, context) in &views {
                // under the fraction rule an eligible speaker can still own
                // failing turns; those never become supervision targets
                let target_turns: Vec<usize> = session.turns[start..end]
                    .iter()
                    .filter(|t| &t.speaker_id == target && t.utterance.quality_pass)
                    .map(|t| t.turn_index)
                    .collect();
                if target_turns.is_empty() {
                    continue;
                }
                let Some(caps) = speaker_captions.get(target) else {
                    stats.skipped_views_missing_captions += 1;
                    continue;
                };
                let turns: Vec<TurnRef> = session.turns[start..end]
                    .iter()
                    .map(|t| TurnRef {
                        turn_index: t.turn_index,
                        speaker_id: t.speaker_id.clone(),
                        utterance_id: t.utterance.utterance_id.clone(),
                        text: t.utterance.text.clone(),
                        audio: t.utterance.audio.clone(),
                    })
                    .collect();
                for (style, caption) in attach_captions(caps, CaptionLevel::Speaker)? {
                    out.push(DialogueInstance {
                        instance_id: format!(
                            "{}#{}-{}#{}#{}",
                            session.session_id,
                            start,
                            end,
                            target,
                            style.as_str()
                        ),
                        session_id: session.session_id.clone(),
                        target_speaker_id: target.clone(),
                        context_speaker_id: context.clone(),
                        window_start: start,
                        window_end: end,
                        style,
                        caption,
                        turns: turns.clone(),
                        target_turns: target_turns.clone(),
                    });
                }
            }
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
pub(crate) mod testcorpus {
    //! Session builders shared by corpus tests.

    use super::*;

    pub fn record(id: &str, speaker: &str, pass: bool) -> UtteranceRecord {
        UtteranceRecord {
            utterance_id: id.to_string(),
            speaker_id: speaker.to_string(),
            text: format!("text of {id}"),
            audio: format!("audio/{id}.wav"),
            quality_pass: pass,
            captions: Some(utt_caps(id)),
        }
    }

    pub fn utt_caps(id: &str) -> CaptionSet {
        CaptionSet {
            aps: format!("aps caption {id}"),
            dsd: format!("dsd caption {id}"),
            rp: format!("rp caption {id}"),
            level: CaptionLevel::Utterance,
        }
    }

    pub fn spk_caps(spk: &str) -> CaptionSet {
        CaptionSet {
            aps: format!("aps speaker {spk}"),
            dsd: format!("dsd speaker {spk}"),
            rp: format!("rp speaker {spk}"),
            level: CaptionLevel::Speaker,
        }
    }

    /// Alternating two-speaker session; `fail_turns` marks failing turns.
    pub fn session(id: &str, n_turns: usize, fail_turns: &[usize]) -> DialogueSession {
        let turns = (0..n_turns)
            .map(|i| {
                let speaker = if i % 2 == 0 { "spk_a" } else { "spk_b" };
                Turn {
                    turn_index: i,
                    speaker_id: speaker.to_string(),
                    utterance: record(
                        &format!("{id}_t{i:03}"),
                        speaker,
                        !fail_turns.contains(&i),
                    ),
                }
            })
            .collect();
        DialogueSession::new(id.to_string(), turns).unwrap()
    }

    pub fn speaker_caption_map() -> BTreeMap<String, CaptionSet> {
        let mut map = BTreeMap::new();
        map.insert("spk_a".to_string(), spk_caps("spk_a"));
        map.insert("spk_b".to_string(), spk_caps("spk_b"));
        map
    }
}
