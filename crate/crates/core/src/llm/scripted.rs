//! Transcript-replay backend and the recording wrapper that produces
//! transcripts.
//!
//! Transcripts are JSONL files of `{"prompt_sha256": hex, "response": str}`.
//! Replay keys on the prompt hash, so a recorded run can be replayed
//! byte-reproducibly without any model, regardless of request order for
//! identical prompts.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt_sha256: String,
    pub response: String,
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Replays responses from a transcript, consuming same-hash entries in file
/// order.
pub struct ScriptedBackend {
    entries: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ScriptedBackend {
    pub fn from_entries(entries: Vec<TranscriptEntry>) -> Self {
        let mut map: HashMap<String, VecDeque<String>> = HashMap::new();
        for entry in entries {
            map.entry(entry.prompt_sha256).or_default().push_back(entry.response);
        }
        ScriptedBackend {
            entries: Mutex::new(map),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, std::io::Error> {
        let content = fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("transcript line {}: {e}", idx + 1),
                )
            })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let hash = prompt_hash(prompt);
        let mut entries = self.entries.lock().expect("transcript lock");
        match entries.get_mut(&hash).and_then(VecDeque::pop_front) {
            Some(response) => Ok(response),
            None => Err(BackendError(format!(
                "no scripted response for prompt {hash}"
            ))),
        }
    }

    fn name(&self) -> &'static str {
        "scripted"
    }
}

/// Wraps another backend and records every completed prompt/response pair.
/// Identical prompts record one entry per call, so replay has a response for
/// every request the run made.
pub struct RecordingBackend<B: Backend> {
    inner: B,
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            entries: Mutex::new(Vec::new()),
        }
    }

    /// Recorded entries, sorted by hash then response for a deterministic
    /// transcript regardless of worker completion order.
    pub fn entries(&self) -> Vec<TranscriptEntry> {
        let mut entries = self.entries.lock().expect("record lock").clone();
        entries.sort_by(|a, b| {
            (&a.prompt_sha256, &a.response).cmp(&(&b.prompt_sha256, &b.response))
        });
        entries
    }

    pub fn write_transcript(&self, path: &Path) -> Result<(), std::io::Error> {
        let mut out = String::new();
        for entry in self.entries() {
            out.push_str(&serde_json::to_string(&entry).expect("entry serializes"));
            out.push('\n');
        }
        fs::write(path, out)
    }

    /// Per-hash response counts, useful for asserting replay coverage.
    pub fn hash_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for entry in self.entries.lock().expect("record lock").iter() {
            *counts.entry(entry.prompt_sha256.clone()).or_default() += 1;
        }
        counts
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let response = self.inner.complete(prompt)?;
        self.entries.lock().expect("record lock").push(TranscriptEntry {
            prompt_sha256: prompt_hash(prompt),
            response: response.clone(),
        });
        Ok(response)
    }

    fn name(&self) -> &'static str {
        "recording"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_consumes_entries_in_order() {
        let hash = prompt_hash("p");
        let backend = ScriptedBackend::from_entries(vec![
            TranscriptEntry {
                prompt_sha256: hash.clone(),
                response: "first".into(),
            },
            TranscriptEntry {
                prompt_sha256: hash,
                response: "second".into(),
            },
        ]);
        assert_eq!(backend.complete("p").unwrap(), "first");
        assert_eq!(backend.complete("p").unwrap(), "second");
        assert!(backend.complete("p").is_err());
    }

    #[test]
    fn record_then_replay_round_trip() {
        let recording = RecordingBackend::new(super::super::MockBackend);
        let prompt = "Is there a table present in the following text? Reply with 'yes' or \
                      'no'.\n\nText:\nCash at bank | 1,844,776";
        let live_answer = recording.complete(prompt).unwrap();
        let replay = ScriptedBackend::from_entries(recording.entries());
        assert_eq!(replay.complete(prompt).unwrap(), live_answer);
    }

    #[test]
    fn missing_prompt_is_transport_error() {
        let backend = ScriptedBackend::from_entries(vec![]);
        let err = backend.complete("unknown").unwrap_err();
        assert!(err.to_string().contains("no scripted response"));
    }
}
