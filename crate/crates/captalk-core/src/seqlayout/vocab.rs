//! Token id space for the unified sequence: character-level text tokens,
//! speaker tags, the five control-attribute alphabets, structural markers,
//! one continuous-slot marker for the speaker condition, and sixteen
//! acoustic codebooks. Ranges are disjoint by construction.

use super::TokenId;
use crate::corpus::CorpusManifest;
use crate::cot::{CoTLabel, CotVocab, ProsodyBin};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Number of acoustic codebooks per frame.
pub const N_CODEBOOKS: usize = 16;

/// Structural tokens. `EspkSlot` is the continuous-slot marker whose
/// embedding is supplied externally rather than looked up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    CapStart,
    CapEnd,
    CtxStart,
    CtxEnd,
    CotStart,
    CotEnd,
    AudioStart,
    AudioEnd,
    EspkSlot,
}

const MARKERS: [Marker; 9] = [
    Marker::CapStart,
    Marker::CapEnd,
    Marker::CtxStart,
    Marker::CtxEnd,
    Marker::CotStart,
    Marker::CotEnd,
    Marker::AudioStart,
    Marker::AudioEnd,
    Marker::EspkSlot,
];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Vocabulary {
    chars: Vec<char>,
    speakers: Vec<String>,
    emotions: Vec<String>,
    tones: Vec<String>,
    codebook_size: u16,
}

impl Vocabulary {
    /// Fixed id table from the corpus manifest: characters come from every
    /// text and caption, speaker tags from every speaker.
    pub fn build(manifest: &CorpusManifest, cot: &CotVocab, codebook_size: u16) -> Self {
        let mut chars: BTreeSet<char> = BTreeSet::new();
        let mut speakers: BTreeSet<String> = BTreeSet::new();
        for rec in manifest.utterances.values() {
            chars.extend(rec.text.chars());
            speakers.insert(rec.speaker_id.clone());
            if let Some(caps) = &rec.captions {
                chars.extend(caps.aps.chars());
                chars.extend(caps.dsd.chars());
                chars.extend(caps.rp.chars());
            }
        }
        for (speaker, caps) in &manifest.speaker_captions {
            speakers.insert(speaker.clone());
            chars.extend(caps.aps.chars());
            chars.extend(caps.dsd.chars());
            chars.extend(caps.rp.chars());
        }
        Self::from_parts(
            chars.into_iter().collect(),
            speakers.into_iter().collect(),
            cot,
            codebook_size,
        )
    }

    pub fn from_parts(
        chars: Vec<char>,
        speakers: Vec<String>,
        cot: &CotVocab,
        codebook_size: u16,
     ) -> Self {
        Self {
            chars,
            speakers,
            emotions: cot.emotions.clone(),
            tones: cot.tones.clone(),
            codebook_size,
        }
    }

    pub fn codebook_size(&self) -> u16 {
        self.codebook_size
    }

    // Range bases. Markers sit at the bottom so their ids are stable across
    // corpora.
    fn base_chars(&self) -> TokenId {
        MARKERS.len() as TokenId
    }
    fn base_speakers(&self) -> TokenId {
        self.base_chars() + self.chars.len() as TokenId
    }
    fn base_emotions(&self) -> TokenId {
        self.base_speakers() + self.speakers.len() as TokenId
    }
    fn base_tones(&self) -> TokenId {
        self.base_emotions() + self.emotions.len() as TokenId
    }
    fn base_pitch(&self) -> TokenId {
        self.base_tones() + self.tones.len() as TokenId
    }
    fn base_energy(&self) -> TokenId {
        self.base_pitch() + 7
    }
    fn base_speed(&self) -> TokenId {
        self.base_energy() + 7
    }
    fn base_acoustic(&self) -> TokenId {
        self.base_speed() + 7
    }

    pub fn total_size(&self) -> TokenId {
        self.base_acoustic() + (N_CODEBOOKS as TokenId) * self.codebook_size as TokenId
    }

    pub fn marker(&self, m: Marker) -> TokenId {
        MARKERS.iter().position(|&x| x == m).unwrap() as TokenId
    }

    pub fn char_token(&self, c: char) -> Result<TokenId> {
        self.chars
            .binary_search(&c)
            .map(|i| self.base_chars() + i as TokenId)
            .map_err(|_| Error::Layout(format!("character {c:?} is not in the vocabulary")))
    }

    pub fn speaker_token(&self, speaker: &str) -> Result<TokenId> {
        self.speakers
            .iter()
            .position(|s| s == speaker)
            .map(|i| self.base_speakers() + i as TokenId)
            .ok_or_else(|| Error::Layout(format!("speaker {speaker:?} is not in the vocabulary")))
    }

    pub fn emotion_token(&self, emotion: &str) -> Result<TokenId> {
        self.emotions
            .iter()
            .position(|e| e == emotion)
            .map(|i| self.base_emotions() + i as TokenId)
            .ok_or_else(|| Error::Layout(format!("emotion {emotion:?} is not in the vocabulary")))
    }

    pub fn tone_token(&self, tone: &str) -> Result<TokenId> {
        self.tones
            .iter()
            .position(|t| t == tone)
            .map(|i| self.base_tones() + i as TokenId)
            .ok_or_else(|| Error::Layout(format!("tone {tone:?} is not in the vocabulary")))
    }

    pub fn pitch_token(&self, bin: ProsodyBin) -> TokenId {
        self.base_pitch() + bin.level_index() as TokenId
    }

    pub fn energy_token(&self, bin: ProsodyBin) -> TokenId {
        self.base_energy() + bin.level_index() as TokenId
    }

    pub fn speed_token(&self, bin: ProsodyBin) -> TokenId {
        self.base_speed() + bin.level_index() as TokenId
    }

    /// The five attribute tokens of a control label, in the fixed order.
    pub fn cot_tokens(&self, label: &CoTLabel) -> Result<[TokenId; 5]> {
        Ok([
            self.emotion_token(&label.emotion)?,
            self.tone_token(&label.tone)?,
            self.pitch_token(label.pitch),
            self.energy_token(label.energy),
            self.speed_token(label.speed),
        ])
    }

    pub fn acoustic_token(&self, codebook: usize, code: u16) -> Result<TokenId> {
        if codebook >= N_CODEBOOKS || code >= self.codebook_size {
            return Err(Error::Layout(format!(
                "acoustic token out of range: codebook {codebook}, code {code}"
            )));
        }
        Ok(self.base_acoustic()
            + codebook as TokenId * self.codebook_size as TokenId
            + code as TokenId)
    }

    /// What category an id belongs to.
    pub fn kind(&self, id: TokenId) -> TokenKind {
        if id < self.base_chars() {
            return TokenKind::Marker(MARKERS[id as usize]);
        }
        if id < self.base_speakers() {
            return TokenKind::Char(self.chars[(id - self.base_chars()) as usize]);
        }
        if id < self.base_emotions() {
            return TokenKind::Speaker(
                self.speakers[(id - self.base_speakers()) as usize].clone(),
            );
        }
        if id < self.base_tones() {
            return TokenKind::Emotion(
                self.emotions[(id - self.base_emotions()) as usize].clone(),
            );
        }
        if id < self.base_pitch() {
            return TokenKind::Tone(self.tones[(id - self.base_tones()) as usize].clone());
        }
        if id < self.base_acoustic() {
            return TokenKind::ProsodyLevel(((id - self.base_pitch()) % 7) as usize);
        }
        if id < self.total_size() {
            let rel = id - self.base_acoustic();
            let v = self.codebook_size as TokenId;
            return TokenKind::Acoustic {
                codebook: (rel / v) as usize,
                code: (rel % v) as u16,
            };
        }
        TokenKind::OutOfRange
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Marker(Marker),
    Char(char),
    Speaker(String),
    Emotion(String),
    Tone(String),
    ProsodyLevel(usize),
    Acoustic { codebook: usize, code: u16 },
    OutOfRange,
}
