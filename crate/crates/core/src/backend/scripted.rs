use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use super::{prompt_digest, Backend, BackendError, BackendErrorKind, PromptRequest, Transcript, TranscriptEntry};

enum Script {
    ByDigest(HashMap<String, String>),
    Sequence(Mutex<VecDeque<String>>),
}

/// Replays stored responses: either looked up by the SHA-256 of the prompt,
/// or handed out in order regardless of the prompt.
pub struct ScriptedBackend {
    id: String,
    script: Script,
    transcript: Transcript,
}

impl ScriptedBackend {
    pub fn by_digest(id: &str, responses: HashMap<String, String>) -> Self {
        ScriptedBackend {
            id: id.to_string(),
            script: Script::ByDigest(responses),
            transcript: Transcript::new(),
        }
    }

    /// Keys are prompt texts; they are hashed on construction.
    pub fn from_pairs<I, P, R>(id: &str, pairs: I) -> Self
    where
        I: IntoIterator<Item = (P, R)>,
        P: AsRef<str>,
        R: Into<String>,
    {
        let map = pairs
            .into_iter()
            .map(|(p, r)| (prompt_digest(p.as_ref()), r.into()))
            .collect();
        Self::by_digest(id, map)
    }

    pub fn sequence<I, R>(id: &str, responses: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: Into<String>,
    {
        ScriptedBackend {
            id: id.to_string(),
            script: Script::Sequence(Mutex::new(responses.into_iter().map(Into::into).collect())),
            transcript: Transcript::new(),
        }
    }

    /// Replays the successful attempts of a recorded transcript.
    pub fn from_transcript(id: &str, entries: &[TranscriptEntry]) -> Self {
        let map = entries
            .iter()
            .filter_map(|e| e.response.clone().map(|r| (e.prompt_digest.clone(), r)))
            .collect();
        Self::by_digest(id, map)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &PromptRequest) -> Result<String, BackendError> {
        let digest = prompt_digest(&request.text);
        let response = match &self.script {
            Script::ByDigest(map) => map.get(&digest).cloned(),
            Script::Sequence(queue) => queue.lock().expect("script lock").pop_front(),
        };
        self.transcript.append(TranscriptEntry {
            prompt_digest: digest.clone(),
            prompt: request.text.clone(),
            response: response.clone(),
            error: response.is_none().then(|| "no scripted response".to_string()),
            latency_ms: 0,
            attempt: 1,
        });
        response.ok_or_else(|| BackendError {
            kind: BackendErrorKind::BadResponse,
            message: format!("no scripted response for prompt {digest}"),
            attempts: 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_lookup_replays_byte_identical_text() {
        let stored = "  [{\"a\": [\"B\"]}]\n\u{00e9}";
        let b = ScriptedBackend::from_pairs("s", [("prompt one", stored)]);
        assert_eq!(b.complete(&PromptRequest::bare("prompt one")).unwrap(), stored);
        let err = b.complete(&PromptRequest::bare("prompt two")).unwrap_err();
        assert_eq!(err.kind, BackendErrorKind::BadResponse);
        assert_eq!(b.transcript().len(), 2);
    }

    #[test]
    fn transcript_replay_reproduces_responses() {
        let live = ScriptedBackend::sequence("live", ["r1", "r2"]);
        let prompts = ["p1", "p2"];
        let first: Vec<String> = prompts
            .iter()
            .map(|p| live.complete(&PromptRequest::bare(*p)).unwrap())
            .collect();
        let replay = ScriptedBackend::from_transcript("replay", &live.transcript().entries());
        let second: Vec<String> = prompts
            .iter()
            .map(|p| replay.complete(&PromptRequest::bare(*p)).unwrap())
            .collect();
        assert_eq!(first, second);
    }
}
