//! Corpus manifest ingestion: one line-delimited JSON file holding typed
//! records for utterances, speaker-level captions, and sessions.

use super::{CaptionSet, DialogueSession, Turn, UtteranceRecord};
use crate::error::{Error, Result};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ManifestRecord {
    Utterance(UtteranceRecord),
    SpeakerCaption {
        speaker_id: String,
        captions: CaptionSet,
    },
    Session {
        session_id: String,
        turns: Vec<SessionTurnRef>,
    },
}

#[derive(Deserialize)]
struct SessionTurnRef {
    turn_index: usize,
    speaker_id: String,
    utterance_id: String,
}

/// The fully-resolved corpus input.
#[derive(Debug, Clone)]
pub struct CorpusManifest {
    /// Keyed by utterance id; ids are unique corpus-wide.
    pub utterances: BTreeMap<String, UtteranceRecord>,
    pub speaker_captions: BTreeMap<String, CaptionSet>,
    /// Validated sessions in id order.
    pub sessions: Vec<DialogueSession>,
    /// Directory of the manifest file; audio paths resolve against it.
    pub root: PathBuf,
}

impl CorpusManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file =
            std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let reader = std::io::BufReader::new(file);

        let mut utterances: BTreeMap<String, UtteranceRecord> = BTreeMap::new();
        let mut speaker_captions = BTreeMap::new();
        let mut raw_sessions: Vec<(usize, String, Vec<SessionTurnRef>)> = Vec::new();

        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord =
                serde_json::from_str(&line).map_err(|e| Error::Manifest {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            match record {
                ManifestRecord::Utterance(u) => {
                    if u.text.trim().is_empty() {
                        return Err(Error::Manifest {
                            line: i + 1,
                            reason: format!("utterance {} has empty text", u.utterance_id),
                        });
                    }
                    if utterances.contains_key(&u.utterance_id) {
                        return Err(Error::Manifest {
                            line: i + 1,
                            reason: format!("duplicate utterance_id {:?}", u.utterance_id),
                        });
                    }
                    utterances.insert(u.utterance_id.clone(), u);
                }
                ManifestRecord::SpeakerCaption {
                    speaker_id,
                    captions,
                } => {
                    speaker_captions.insert(speaker_id, captions);
                }
                ManifestRecord::Session { session_id, turns } => {
                    raw_sessions.push((i + 1, session_id, turns));
                }
            }
        }

        let mut sessions = Vec::new();
        for (line, session_id, refs) in raw_sessions {
            let mut turns = Vec::with_capacity(refs.len());
            for r in refs {
                let utterance =
                    utterances
                        .get(&r.utterance_id)
                        .cloned()
                        .ok_or(Error::Manifest {
                            line,
                            reason: format!(
                                "session {session_id} references unknown utterance {:?}",
                                r.utterance_id
                            ),
                        })?;
                if utterance.speaker_id != r.speaker_id {
                    return Err(Error::Manifest {
                        line,
                        reason: format!(
                            "session {session_id} turn {}: speaker {:?} does not match utterance speaker {:?}",
                            r.turn_index, r.speaker_id, utterance.speaker_id
                        ),
                    });
                }
                turns.push(Turn {
                    turn_index: r.turn_index,
                    speaker_id: r.speaker_id,
                    utterance,
                });
            }
            sessions.push(DialogueSession::new(session_id, turns)?);
        }
        sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));

        Ok(Self {
            utterances,
            speaker_captions,
            sessions,
            root: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        })
    }

    /// Absolute path of an utterance's audio file.
    pub fn audio_path(&self, record: &UtteranceRecord) -> PathBuf {
        self.root.join(&record.audio)
    }

    pub fn utterance_ids(&self) -> std::collections::BTreeSet<String> {
        self.utterances.keys().cloned().collect()
    }

    /// Utterance ids grouped by speaker, both levels ordered.
    pub fn by_speaker(&self) -> BTreeMap<String, Vec<String>> {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (id, rec) in &self.utterances {
            map.entry(rec.speaker_id.clone()).or_default().push(id.clone());
        }
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use tempfile::tempdir;

    fn write_manifest(lines: &[&str]) -> (tempfile::TempDir, PathBuf) {
        let dir = tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut f = std::fs::File::create(&path).unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        (dir, path)
    }

    const U1: &str = r#"{"type":"utterance","utterance_id":"u1","speaker_id":"a","text":"hi there","audio":"audio/u1.wav","quality_pass":true}"#;
    const U2: &str = r#"{"type":"utterance","utterance_id":"u2","speaker_id":"b","text":"hello","audio":"audio/u2.wav","quality_pass":true}"#;

    #[test]
    fn loads_utterances_captions_sessions() {
        let cap = r#"{"type":"speaker_caption","speaker_id":"a","captions":{"aps":"x","dsd":"y","rp":"z","level":"speaker"}}"#;
        let ses = r#"{"type":"session","session_id":"s1","turns":[{"turn_index":0,"speaker_id":"a","utterance_id":"u1"},{"turn_index":1,"speaker_id":"b","utterance_id":"u2"}]}"#;
        let (_dir, path) = write_manifest(&[U1, U2, cap, ses]);
        let manifest = CorpusManifest::load(&path).unwrap();
        assert_eq!(manifest.utterances.len(), 2);
        assert_eq!(manifest.speaker_captions.len(), 1);
        assert_eq!(manifest.sessions.len(), 1);
        assert_eq!(manifest.sessions[0].n_turns(), 2);
        assert!(manifest
            .audio_path(&manifest.utterances["u1"])
            .ends_with("audio/u1.wav"));
    }

    #[test]
    fn rejects_duplicate_ids_and_unknown_references() {
        let (_dir, path) = write_manifest(&[U1, U1]);
        assert!(CorpusManifest::load(&path).is_err());

        let ses = r#"{"type":"session","session_id":"s1","turns":[{"turn_index":0,"speaker_id":"a","utterance_id":"missing"},{"turn_index":1,"speaker_id":"b","utterance_id":"u2"}]}"#;
        let (_dir, path) = write_manifest(&[U1, U2, ses]);
        assert!(CorpusManifest::load(&path).is_err());
    }

    #[test]
    fn rejects_speaker_mismatch_and_empty_text() {
        let ses = r#"{"type":"session","session_id":"s1","turns":[{"turn_index":0,"speaker_id":"b","utterance_id":"u1"},{"turn_index":1,"speaker_id":"b","utterance_id":"u2"}]}"#;
        let (_dir, path) = write_manifest(&[U1, U2, ses]);
        assert!(CorpusManifest::load(&path).is_err());

        let empty = r#"{"type":"utterance","utterance_id":"u9","speaker_id":"a","text":"  ","audio":"x.wav","quality_pass":true}"#;
        let (_dir, path) = write_manifest(&[empty]);
        assert!(CorpusManifest::load(&path).is_err());
    }
}
