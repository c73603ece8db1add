use std::collections::HashMap;

use super::{Backend, BackendError, BackendErrorKind, PromptRequest, Stage, Transcript, TranscriptEntry};
use crate::item::BenchmarkItem;
use crate::pipeline::prompts::annotation_to_wire;

/// Answers a toolkit-built prompt from the gold data of its item.
///
/// Perception prompts get the gold annotation in the perception wire
/// format, relevant-context prompts get the full context, and answer
/// prompts get the gold answer phrased to pass grading.
pub fn perfect_respond(request: &PromptRequest, item: &BenchmarkItem) -> Result<String, BackendError> {
    let sidecar = request.sidecar.as_ref().ok_or_else(|| {
        BackendError::new(BackendErrorKind::UnrecognizedPrompt, "prompt carries no sidecar")
    })?;
    if sidecar.item_id != item.item_id {
        return Err(BackendError::new(
            BackendErrorKind::UnrecognizedPrompt,
            format!("sidecar names item {} but gold is for {}", sidecar.item_id, item.item_id),
        ));
    }
    match sidecar.stage {
        Stage::Perception => Ok(annotation_to_wire(&item.context)),
        Stage::RelevantContext => Ok(item.raw_context_text.clone()),
        Stage::Answer => {
            let question_id = sidecar.question_id.as_deref().ok_or_else(|| {
                BackendError::new(BackendErrorKind::UnrecognizedPrompt, "answer prompt without question id")
            })?;
            let question = item.question(question_id).ok_or_else(|| {
                BackendError::new(
                    BackendErrorKind::UnrecognizedPrompt,
                    format!("unknown question {question_id}"),
                )
            })?;
            Ok(question.gold.canonical_answer())
        }
    }
}

pub struct PerfectResponder {
    id: String,
    items: HashMap<String, BenchmarkItem>,
    transcript: Transcript,
}

impl PerfectResponder {
    pub fn new<I: IntoIterator<Item = BenchmarkItem>>(items: I) -> Self {
        PerfectResponder {
            id: "perfect".to_string(),
            items: items.into_iter().map(|i| (i.item_id.clone(), i)).collect(),
            transcript: Transcript::new(),
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}

impl Backend for PerfectResponder {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &PromptRequest) -> Result<String, BackendError> {
        let result = request
            .sidecar
            .as_ref()
            .and_then(|s| self.items.get(&s.item_id))
            .ok_or_else(|| {
                BackendError::new(BackendErrorKind::UnrecognizedPrompt, "prompt not built for a known item")
            })
            .and_then(|item| perfect_respond(request, item));
        self.transcript.append(TranscriptEntry {
            prompt_digest: super::prompt_digest(&request.text),
            prompt: request.text.clone(),
            response: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(|e| e.to_string()),
            latency_ms: 0,
            attempt: 1,
        });
        result
    }
}
