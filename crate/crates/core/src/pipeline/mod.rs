//! Answering strategies over a [`Backend`]: vanilla, chain-of-thought,
//! System 2 Attention, and the perception-first pipeline with and without
//! gold perception.

pub mod extract;
pub mod parse;
pub mod prompts;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, PromptRequest, Sidecar, Stage};
use crate::item::{BenchmarkItem, Question};
use crate::world::ContextKind;

pub use extract::{extract_perspective_context, gold_inference, match_units, normalize};
pub use parse::{parse_perception_response, ParseError, PerceptionEntry, PerceptionInferenceResult};
pub use prompts::PromptError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid method: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Vanilla,
    Cot,
    S2a,
    Perceptom,
    PerceptomOracle,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] = [
        MethodKind::Vanilla,
        MethodKind::Cot,
        MethodKind::S2a,
        MethodKind::Perceptom,
        MethodKind::PerceptomOracle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::Vanilla => "vanilla",
            MethodKind::Cot => "cot",
            MethodKind::S2a => "s2a",
            MethodKind::Perceptom => "perceptom",
            MethodKind::PerceptomOracle => "perceptom_oracle",
        }
    }

    /// Row label used in reports.
    pub fn display_name(&self) -> &'static str {
        match self {
            MethodKind::Vanilla => "Vanilla",
            MethodKind::Cot => "CoT",
            MethodKind::S2a => "S2A",
            MethodKind::Perceptom => "PercepToM",
            MethodKind::PerceptomOracle => "PercepToM+Oracle",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// What is being asked of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Name the perceivers of every unit; one record per context.
    Perception,
    /// Answer the question given the gold perceivers of every unit.
    P2b,
    /// Answer the question from the raw context.
    Tom,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Perception, Task::P2b, Task::Tom];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Perception => "perception",
            Task::P2b => "p2b",
            Task::Tom => "tom",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptProfile {
    Narrative,
    Conversation,
}

impl From<ContextKind> for PromptProfile {
    fn from(kind: ContextKind) -> Self {
        match kind {
            ContextKind::Narrative => PromptProfile::Narrative,
            ContextKind::Conversation => PromptProfile::Conversation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    pub prompt_profile: PromptProfile,
}

impl MethodSpec {
    pub fn for_item(kind: MethodKind, item: &BenchmarkItem) -> Self {
        MethodSpec {
            kind,
            prompt_profile: item.kind().into(),
        }
    }

    pub fn validate_for(&self, item: &BenchmarkItem) -> Result<(), PipelineError> {
        if self.prompt_profile != PromptProfile::from(item.kind()) {
            return Err(PipelineError::InvalidSpec(format!(
                "{:?} profile does not fit item {}",
                self.prompt_profile, item.item_id
            )));
        }
        if self.kind == MethodKind::PerceptomOracle && item.context.is_empty() {
            return Err(PipelineError::InvalidSpec(format!(
                "item {} has no gold annotation",
                item.item_id
            )));
        }
        Ok(())
    }
}

/// The units a chain of agents perceived, in context order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerspectiveContext {
    pub target_chain: Vec<String>,
    pub kept_units: Vec<String>,
    pub dropped_unmatched_keys: Vec<String>,
    #[serde(default)]
    pub unmatched_units: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intermediate {
    pub perception: PerceptionInferenceResult,
    /// Absent when the perception response could not be parsed.
    pub perspective: Option<PerspectiveContext>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodAnswer {
    pub question_id: String,
    pub method: MethodKind,
    pub final_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediate: Option<Intermediate>,
    pub prompts_used: Vec<String>,
    pub responses: Vec<String>,
    /// Parse error text when the perception response was unusable and the
    /// answer fell back to the full context.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_fallback: Option<String>,
}

/// Result of the perception task on one context.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceptionAnswer {
    pub prompt: String,
    pub response: String,
    pub parsed: Result<PerceptionInferenceResult, ParseError>,
}

struct Calls<'a> {
    backend: &'a dyn Backend,
    item_id: &'a str,
    question_id: Option<&'a str>,
    prompts: Vec<String>,
    responses: Vec<String>,
}

impl<'a> Calls<'a> {
    fn new(backend: &'a dyn Backend, item: &'a BenchmarkItem, question: Option<&'a Question>) -> Self {
        Calls {
            backend,
            item_id: &item.item_id,
            question_id: question.map(|q| q.question_id.as_str()),
            prompts: Vec::new(),
            responses: Vec::new(),
        }
    }

    fn ask(&mut self, stage: Stage, text: String) -> Result<String, BackendError> {
        let request = PromptRequest {
            text,
            sidecar: Some(Sidecar {
                item_id: self.item_id.to_string(),
                question_id: self.question_id.map(str::to_string),
                stage,
            }),
        };
        let response = self.backend.complete(&request)?;
        self.prompts.push(request.text);
        self.responses.push(response.clone());
        Ok(response)
    }

    fn finish(self, method: MethodKind, question: &Question, final_text: String) -> MethodAnswer {
        MethodAnswer {
            question_id: question.question_id.clone(),
            method,
            final_text,
            intermediate: None,
            prompts_used: self.prompts,
            responses: self.responses,
            parse_fallback: None,
        }
    }
}

/// Runs the perception task: asks for the perceivers of every unit.
pub fn run_perception(backend: &dyn Backend, item: &BenchmarkItem) -> Result<PerceptionAnswer, PipelineError> {
    let prompt = prompts::build_perception_prompt(item)?;
    let mut calls = Calls::new(backend, item, None);
    let response = calls.ask(Stage::Perception, prompt.clone())?;
    let parsed = parse_perception_response(&response);
    Ok(PerceptionAnswer {
        prompt,
        response,
        parsed,
    })
}

/// Answers one question from the raw context with the given method.
pub fn run_method(
    spec: MethodSpec,
    backend: &dyn Backend,
    item: &BenchmarkItem,
    question: &Question,
) -> Result<MethodAnswer, PipelineError> {
    spec.validate_for(item)?;
    let mut calls = Calls::new(backend, item, Some(question));
    match spec.kind {
        MethodKind::Vanilla => {
            let text = calls.ask(Stage::Answer, prompts::build_vanilla_prompt(item, question)?)?;
            Ok(calls.finish(spec.kind, question, text))
        }
        MethodKind::Cot => {
            let text = calls.ask(Stage::Answer, prompts::build_cot_prompt(item, question)?)?;
            Ok(calls.finish(spec.kind, question, text))
        }
        MethodKind::S2a => {
            let extraction = calls.ask(
                Stage::RelevantContext,
                prompts::build_s2a_extract_prompt(item, question)?,
            )?;
            let text = calls.ask(Stage::Answer, prompts::build_s2a_answer_prompt(&extraction, question))?;
            Ok(calls.finish(spec.kind, question, text))
        }
        MethodKind::Perceptom => {
            let perception_prompt = prompts::build_perception_prompt(item)?;
            let raw = calls.ask(Stage::Perception, perception_prompt)?;
            match parse_perception_response(&raw) {
                Ok(perception) => answer_from_perception(calls, spec.kind, item, question, perception),
                Err(err) => {
                    let text = calls.ask(Stage::Answer, prompts::build_vanilla_prompt(item, question)?)?;
                    let mut answer = calls.finish(spec.kind, question, text);
                    answer.intermediate = Some(Intermediate {
                        perception: PerceptionInferenceResult {
                            entries: Vec::new(),
                            raw_response: raw,
                        },
                        perspective: None,
                    });
                    answer.parse_fallback = Some(err.to_string());
                    Ok(answer)
                }
            }
        }
        MethodKind::PerceptomOracle => {
            answer_from_perception(calls, spec.kind, item, question, gold_inference(&item.context))
        }
    }
}

fn answer_from_perception(
    mut calls: Calls<'_>,
    method: MethodKind,
    item: &BenchmarkItem,
    question: &Question,
    perception: PerceptionInferenceResult,
) -> Result<MethodAnswer, PipelineError> {
    let perspective = extract_perspective_context(&item.context, &perception, &question.target_chain);
    let prompt = prompts::build_response_prompt(item.kind(), &perspective, question);
    let text = calls.ask(Stage::Answer, prompt)?;
    let mut answer = calls.finish(method, question, text);
    answer.intermediate = Some(Intermediate {
        perception,
        perspective: Some(perspective),
    });
    Ok(answer)
}

/// Answers one question given the gold perceivers of every unit.
///
/// Vanilla asks directly and CoT adds the step-by-step suffix. S2A extracts
/// from the annotated listing before answering. Both perception-first
/// methods already have perception in hand, so they run the gold-perception
/// path.
pub fn run_p2b(
    spec: MethodSpec,
    backend: &dyn Backend,
    item: &BenchmarkItem,
    question: &Question,
) -> Result<MethodAnswer, PipelineError> {
    spec.validate_for(item)?;
    let mut calls = Calls::new(backend, item, Some(question));
    let p2b = prompts::build_p2b_prompt(item, question)?;
    match spec.kind {
        MethodKind::Vanilla => {
            let text = calls.ask(Stage::Answer, p2b)?;
            Ok(calls.finish(spec.kind, question, text))
        }
        MethodKind::Cot => {
            let text = calls.ask(Stage::Answer, prompts::with_cot_suffix(p2b))?;
            Ok(calls.finish(spec.kind, question, text))
        }
        MethodKind::S2a => {
            let extraction = calls.ask(
                Stage::RelevantContext,
                prompts::build_s2a_extract_from(
                    item.kind(),
                    &prompts::annotation_to_wire(&item.context),
                    question,
                ),
            )?;
            let text = calls.ask(Stage::Answer, prompts::build_s2a_answer_prompt(&extraction, question))?;
            Ok(calls.finish(spec.kind, question, text))
        }
        MethodKind::Perceptom | MethodKind::PerceptomOracle => {
            answer_from_perception(calls, spec.kind, item, question, gold_inference(&item.context))
        }
    }
}

/// Dispatches a question-level task.
pub fn run_question_task(
    task: Task,
    spec: MethodSpec,
    backend: &dyn Backend,
    item: &BenchmarkItem,
    question: &Question,
) -> Result<MethodAnswer, PipelineError> {
    match task {
        Task::P2b => run_p2b(spec, backend, item, question),
        Task::Tom | Task::Perception => run_method(spec, backend, item, question),
    }
}
