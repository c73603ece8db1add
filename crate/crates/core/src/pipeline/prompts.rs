//! Prompt templates. The template text lives in `prompts/*.txt`.

use thiserror::Error;

use crate::item::{BenchmarkItem, Question};
use crate::world::{AnnotatedContext, ContextKind};

use super::PerspectiveContext;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("item {0} has an empty context")]
    EmptyContext(String),
}

pub const TEMPLATE_VERSION: &str = "v1";
pub const COT_SUFFIX: &str = "Let's think step by step.";
pub const NO_KNOWN_SCENES: &str = "(no known scenes)";
pub const NO_KNOWN_UTTERANCES: &str = "(no known utterances)";

macro_rules! template {
    ($name:literal) => {
        strip_final_newline(include_str!(concat!("../../prompts/", $name, ".txt")))
    };
}

fn strip_final_newline(s: &str) -> &str {
    s.strip_suffix('\n').unwrap_or(s)
}

/// Substitutes `{{key}}` slots in one pass; substituted text is never rescanned.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = &after[..end];
                match values.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[start..start + 2 + end + 2]),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn require_context(item: &BenchmarkItem) -> Result<(), PromptError> {
    if item.raw_context_text.trim().is_empty() {
        Err(PromptError::EmptyContext(item.item_id.clone()))
    } else {
        Ok(())
    }
}

/// Perception inference prompt (first pipeline step).
pub fn build_perception_prompt(item: &BenchmarkItem) -> Result<String, PromptError> {
    require_context(item)?;
    let template = match item.kind() {
        ContextKind::Narrative => template!("perception_narrative"),
        ContextKind::Conversation => template!("perception_conversation"),
    };
    Ok(fill(template, &[("context", &item.raw_context_text)]))
}

/// Gold annotation in the perception wire format: an array of single-key
/// objects. Narrative keys drop their final period.
pub fn annotation_to_wire(context: &AnnotatedContext) -> String {
    let entries: Vec<String> = context
        .units
        .iter()
        .map(|u| {
            let key = match context.kind {
                ContextKind::Narrative => u.text.strip_suffix('.').unwrap_or(&u.text),
                ContextKind::Conversation => &u.text,
            };
            let names: Vec<String> = u
                .perceivers
                .names()
                .iter()
                .map(|n| serde_json::to_string(n).expect("string serializes"))
                .collect();
            format!(
                "{{{}: [{}]}}",
                serde_json::to_string(key).expect("string serializes"),
                names.join(", ")
            )
        })
        .collect();
    let sep = match context.kind {
        ContextKind::Narrative => ",\n ",
        ContextKind::Conversation => ",\n",
    };
    format!("[{}]", entries.join(sep))
}

/// Perception-to-belief task: gold perceivers of every unit, then the question.
pub fn build_p2b_prompt(item: &BenchmarkItem, question: &Question) -> Result<String, PromptError> {
    require_context(item)?;
    let template = match item.kind() {
        ContextKind::Narrative => template!("p2b_narrative"),
        ContextKind::Conversation => template!("p2b_conversation"),
    };
    let wire = annotation_to_wire(&item.context);
    Ok(fill(template, &[("annotation", &wire), ("query", &question.query_block())]))
}

pub fn build_vanilla_prompt(item: &BenchmarkItem, question: &Question) -> Result<String, PromptError> {
    require_context(item)?;
    let template = match item.kind() {
        ContextKind::Narrative => template!("vanilla_narrative"),
        ContextKind::Conversation => template!("vanilla_conversation"),
    };
    Ok(fill(
        template,
        &[("context", &item.raw_context_text), ("query", &question.query_block())],
    ))
}

pub fn build_cot_prompt(item: &BenchmarkItem, question: &Question) -> Result<String, PromptError> {
    Ok(with_cot_suffix(build_vanilla_prompt(item, question)?))
}

/// Appends the step-by-step instruction, on the answer line when the prompt
/// ends with one.
pub fn with_cot_suffix(mut prompt: String) -> String {
    prompt.push(if prompt.ends_with("Answer:") { ' ' } else { '\n' });
    prompt.push_str(COT_SUFFIX);
    prompt
}

pub fn build_s2a_extract_prompt(item: &BenchmarkItem, question: &Question) -> Result<String, PromptError> {
    require_context(item)?;
    Ok(build_s2a_extract_from(item.kind(), &item.raw_context_text, question))
}

/// Relevant-context extraction over arbitrary context text.
pub fn build_s2a_extract_from(kind: ContextKind, context: &str, question: &Question) -> String {
    let template = match kind {
        ContextKind::Narrative => template!("s2a_extract_narrative"),
        ContextKind::Conversation => template!("s2a_extract_conversation"),
    };
    let mut asked = String::new();
    if let Some(info) = &question.target_info {
        asked.push_str(info);
        asked.push(' ');
    }
    asked.push_str(&question.surface_text);
    fill(template, &[("context", context), ("question", &asked)])
}

pub fn build_s2a_answer_prompt(extraction: &str, question: &Question) -> String {
    fill(
        template!("s2a_answer"),
        &[("extraction", extraction.trim()), ("query", &question.query_block())],
    )
}

/// Final PercepToM step: the perspective context of the first chain agent,
/// then the question.
pub fn build_response_prompt(kind: ContextKind, perspective: &PerspectiveContext, question: &Question) -> String {
    let agent = perspective
        .target_chain
        .first()
        .map(String::as_str)
        .unwrap_or("everyone");
    let (template, sep, empty) = match kind {
        ContextKind::Narrative => (template!("response_narrative"), " ", NO_KNOWN_SCENES),
        ContextKind::Conversation => (template!("response_conversation"), "\n", NO_KNOWN_UTTERANCES),
    };
    let body = if perspective.kept_units.is_empty() {
        empty.to_string()
    } else {
        perspective.kept_units.join(sep)
    };
    fill(
        template,
        &[("agent", agent), ("perspective", &body), ("query", &question.query_block())],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_is_single_pass() {
        assert_eq!(fill("a {{x}} b {{y}}", &[("x", "{{y}}"), ("y", "2")]), "a {{y}} b 2");
        assert_eq!(fill("{{missing}} {\"k\": 1}", &[]), "{{missing}} {\"k\": 1}");
        assert_eq!(fill("open {{", &[]), "open {{");
    }

    #[test]
    fn templates_carry_the_dummy_examples() {
        assert!(template!("perception_narrative").ends_with(r#"[{"Noah exited the living room.": ["Noah", "Emma"]},]"#));
        assert!(template!("perception_conversation").ends_with(r#"[{"Noah: Hi, Emma.": ["Noah", "Emma"]},]"#));
    }
}
