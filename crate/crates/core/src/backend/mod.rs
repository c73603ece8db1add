//! Model backends behind one blocking `complete` call.
//!
//! [`http::ChatClient`] talks to a hosted chat-completion endpoint,
//! [`scripted::ScriptedBackend`] replays stored responses, and
//! [`perfect::PerfectResponder`] answers from gold data for oracle runs.

pub mod http;
pub mod perfect;
pub mod scripted;

use std::io::{self, BufRead, Write};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{BackendConfig, ChatClient};
pub use perfect::{perfect_respond, PerfectResponder};
pub use scripted::ScriptedBackend;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendErrorKind {
    Auth,
    RateLimitedExhausted,
    Transport,
    BadResponse,
    InvalidRequest,
    UnrecognizedPrompt,
}

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("{kind:?} after {attempts} attempt(s): {message}")]
pub struct BackendError {
    pub kind: BackendErrorKind,
    pub message: String,
    pub attempts: u32,
}

impl BackendError {
    pub fn new(kind: BackendErrorKind, message: impl Into<String>) -> Self {
        BackendError {
            kind,
            message: message.into(),
            attempts: 0,
        }
    }
}

/// Which pipeline step produced a prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Perception,
    RelevantContext,
    Answer,
}

/// Links a prompt to the item and question it was built for. Travels next
/// to the prompt text, never inside it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub item_id: String,
    pub question_id: Option<String>,
    pub stage: Stage,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub text: String,
    pub sidecar: Option<Sidecar>,
}

impl PromptRequest {
    pub fn bare(text: impl Into<String>) -> Self {
        PromptRequest {
            text: text.into(),
            sidecar: None,
        }
    }
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, request: &PromptRequest) -> Result<String, BackendError>;
}

pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt_digest: String,
    pub prompt: String,
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub latency_ms: u64,
    pub attempt: u32,
}

/// Append-only log of backend calls, one entry per attempt.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    entries: Arc<Mutex<Vec<TranscriptEntry>>>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&self, entry: TranscriptEntry) {
        self.entries.lock().expect("transcript lock").push(entry);
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("transcript lock").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("transcript lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for entry in self.entries() {
            serde_json::to_writer(&mut out, &entry)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<Vec<TranscriptEntry>> {
        let mut entries = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(io::Error::other)?);
        }
        Ok(entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transcript_round_trips_through_jsonl() {
        let t = Transcript::new();
        t.append(TranscriptEntry {
            prompt_digest: prompt_digest("p"),
            prompt: "p".into(),
            response: Some("r".into()),
            error: None,
            latency_ms: 3,
            attempt: 1,
        });
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        assert_eq!(Transcript::read_jsonl(&buf[..]).unwrap(), t.entries());
    }

    #[test]
    fn digest_is_sha256_hex() {
        assert_eq!(
            prompt_digest(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
