//! Turns raw stories and marked transcripts into annotated dataset items.
//!
//! Input is either a JSONL file of [`RawRecord`]s or a single plain-text
//! story or transcript. A plain-text file is a transcript when every
//! non-blank line is a `Name: words` line or a `[[join|leave NAME]]` marker.

use std::path::Path;

use serde::Deserialize;

use perceptom_core::backend::prompt_digest;
use perceptom_core::convo::{cast_of, map_perceivers, parse_transcript, render_conversation};
use perceptom_core::item::{AnnotationSource, BenchmarkItem, ItemDetails, Question, Scenario, Source};
use perceptom_core::storygen::ingest_story;
use perceptom_core::world::ContextKind;

use crate::dataset::{DatasetFile, DatasetKind};
use crate::HarnessError;

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
pub struct ChainQuery {
    pub chain: Vec<String>,
    pub object: String,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum RawRecord {
    Story {
        id: String,
        story: String,
        #[serde(default)]
        questions: Vec<ChainQuery>,
    },
    Transcript {
        id: String,
        #[serde(alias = "conversation")]
        transcript: String,
        #[serde(default)]
        questions: Vec<Question>,
        #[serde(default)]
        scenario: Option<Scenario>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordError {
    /// 1-based position of the record in the input.
    pub index: usize,
    pub id: Option<String>,
    pub reason: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.id {
            Some(id) => write!(f, "record {} ({id}): {}", self.index, self.reason),
            None => write!(f, "record {}: {}", self.index, self.reason),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Annotated {
    pub dataset: DatasetFile,
    pub errors: Vec<RecordError>,
}

pub fn annotate_record(record: &RawRecord) -> Result<BenchmarkItem, String> {
    match record {
        RawRecord::Story { id, story, questions } => {
            let queries: Vec<(Vec<String>, String)> =
                questions.iter().map(|q| (q.chain.clone(), q.object.clone())).collect();
            ingest_story(id, story.trim(), &queries).map_err(|e| e.to_string())
        }
        RawRecord::Transcript {
            id,
            transcript,
            questions,
            scenario,
        } => {
            let (utterances, presence_events) = parse_transcript(transcript).map_err(|e| e.to_string())?;
            let context = map_perceivers(&utterances, &presence_events).map_err(|e| e.to_string())?;
            Ok(BenchmarkItem {
                item_id: id.clone(),
                raw_context_text: render_conversation(&utterances),
                context,
                annotation: AnnotationSource::Derived,
                questions: questions.clone(),
                scenario: *scenario,
                source: Source::Ingested,
                question_set_id: (!questions.is_empty()).then(|| id.clone()),
                cast: cast_of(&utterances, &presence_events),
                details: ItemDetails::Conversation {
                    utterances,
                    presence_events,
                },
            })
        }
    }
}

fn looks_like_transcript(text: &str) -> bool {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .all(|l| l.starts_with("[[") || l.split_once(':').is_some_and(|(name, _)| !name.is_empty() && name.len() <= 60))
}

/// Reads the raw records of an input file; `stem` names a plain-text record.
pub fn read_records(text: &str, stem: &str, jsonl: bool) -> Vec<Result<RawRecord, RecordError>> {
    if !jsonl {
        let record = if looks_like_transcript(text) {
            RawRecord::Transcript {
                id: stem.to_string(),
                transcript: text.to_string(),
                questions: Vec::new(),
                scenario: None,
            }
        } else {
            RawRecord::Story {
                id: stem.to_string(),
                story: text.to_string(),
                questions: Vec::new(),
            }
        };
        return vec![Ok(record)];
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| RecordError {
                index: i + 1,
                id: None,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn annotate_text(text: &str, stem: &str, jsonl: bool) -> Annotated {
    let mut items = Vec::new();
    let mut errors = Vec::new();
    for (i, record) in read_records(text, stem, jsonl).into_iter().enumerate() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let id = match &record {
            RawRecord::Story { id, .. } | RawRecord::Transcript { id, .. } => id.clone(),
        };
        match annotate_record(&record) {
            Ok(item) => items.push(item),
            Err(reason) => errors.push(RecordError {
                index: i + 1,
                id: Some(id),
                reason,
            }),
        }
    }
    let kind = if items.iter().all(|i| i.kind() == ContextKind::Narrative) {
        DatasetKind::Tomi
    } else if items.iter().all(|i| i.kind() == ContextKind::Conversation) {
        DatasetKind::Convo
    } else {
        DatasetKind::Mixed
    };
    Annotated {
        dataset: DatasetFile::new(kind, "ingested", prompt_digest(text), items),
        errors,
    }
}

pub fn annotate_file(path: &Path) -> Result<Annotated, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
    let jsonl = path.extension().is_some_and(|e| e == "jsonl");
    Ok(annotate_text(&text, stem, jsonl))
}
