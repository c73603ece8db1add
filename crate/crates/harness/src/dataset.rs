//! Versioned JSONL dataset files: one header line, then one item per line.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use perceptom_core::backend::prompt_digest;
use perceptom_core::convo::{generate_mini_conversation, map_perceivers, MiniConvoConfig};
use perceptom_core::item::{AnnotationSource, BenchmarkItem, GoldAnswer, ItemDetails, QuestionType, Scenario};
use perceptom_core::storygen::{generate_story, render_story, StoryConfig};
use perceptom_core::world::{annotate_story, simulate_belief_annotated};

use crate::HarnessError;

pub const DATASET_SCHEMA: &str = "perceptom.dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Tomi,
    Convo,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema: String,
    pub version: u32,
    pub kind: DatasetKind,
    /// `generated` or `ingested`.
    pub source: String,
    pub config_digest: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub items: Vec<BenchmarkItem>,
}

impl DatasetFile {
    pub fn new(kind: DatasetKind, source: &str, config_digest: String, items: Vec<BenchmarkItem>) -> Self {
        DatasetFile {
            header: DatasetHeader {
                schema: DATASET_SCHEMA.to_string(),
                version: DATASET_VERSION,
                kind,
                source: source.to_string(),
                config_digest,
                count: items.len(),
            },
            items,
        }
    }

    /// SHA-256 over the serialized file; identifies the dataset in run headers.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory succeeds");
        prompt_digest(&String::from_utf8(buf).expect("JSON is UTF-8"))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), HarnessError> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for item in &self.items {
            serde_json::to_writer(&mut out, item)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let mut out = BufWriter::new(File::create(path).map_err(|e| HarnessError::io(path, e))?);
        self.write_to(&mut out)?;
        out.flush().map_err(|e| HarnessError::io(path, e))?;
        Ok(())
    }

    /// Parses a dataset file and rejects it if any item is inconsistent.
    pub fn read_from<R: BufRead>(input: R) -> Result<Self, HarnessError> {
        let file = Self::read_unchecked(input)?;
        let violations = file.violations();
        if let Some(first) = violations.first() {
            return Err(HarnessError::Invalid(format!("{} violation(s); first: {first}", violations.len())));
        }
        Ok(file)
    }

    pub fn read_unchecked<R: BufRead>(input: R) -> Result<Self, HarnessError> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
        let (_, first) = lines
            .next()
            .ok_or_else(|| HarnessError::Schema("empty dataset file".into()))?;
        let header: DatasetHeader = serde_json::from_str(&first?)
            .map_err(|e| HarnessError::Schema(format!("bad dataset header: {e}")))?;
        if header.schema != DATASET_SCHEMA || header.version != DATASET_VERSION {
            return Err(HarnessError::Schema(format!(
                "expected {DATASET_SCHEMA} v{DATASET_VERSION}, found {} v{}",
                header.schema, header.version
            )));
        }
        let mut items = Vec::with_capacity(header.count);
        for (n, line) in lines {
            let item: BenchmarkItem = serde_json::from_str(&line?).map_err(|e| HarnessError::Record {
                line: n + 1,
                reason: e.to_string(),
            })?;
            items.push(item);
        }
        if items.len() != header.count {
            return Err(HarnessError::Schema(format!(
                "header announces {} items, file holds {}",
                header.count,
                items.len()
            )));
        }
        Ok(DatasetFile { header, items })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }

    pub fn load_unchecked(path: &Path) -> Result<Self, HarnessError> {
        let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
        Self::read_unchecked(BufReader::new(file))
    }

    /// Every inconsistency between stored golds and what the world model
    /// re-derives from the stored events or presence log.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut ids = HashSet::new();
        for item in &self.items {
            if !ids.insert(item.item_id.as_str()) {
                out.push(format!("{}: duplicate item id", item.item_id));
            }
            out.extend(item_violations(item).into_iter().map(|v| format!("{}: {v}", item.item_id)));
        }
        out
    }
}

fn item_violations(item: &BenchmarkItem) -> Vec<String> {
    let mut out = Vec::new();
    let mut qids = HashSet::new();
    for q in &item.questions {
        if !qids.insert(q.question_id.as_str()) {
            out.push(format!("duplicate question id {}", q.question_id));
        }
    }
    if let Some(dup) = item.context.duplicate_text() {
        out.push(format!("repeated unit `{dup}`"));
    }
    match &item.details {
        ItemDetails::Story { events } => {
            if render_story(events) != item.raw_context_text {
                out.push("raw text differs from rendered events".into());
            }
            let derived = match annotate_story(events) {
                Ok(c) => c,
                Err(e) => {
                    out.push(format!("events do not replay: {e}"));
                    return out;
                }
            };
            if item.annotation == AnnotationSource::Derived && derived != item.context {
                out.push("annotation differs from replayed events".into());
            }
            for q in &item.questions {
                let (GoldAnswer::ContainerPair { correct, .. }, Some(object)) = (&q.gold, &q.object) else {
                    out.push(format!("{}: story question without a location gold", q.question_id));
                    continue;
                };
                if q.target_chain.is_empty() {
                    continue;
                }
                match simulate_belief_annotated(events, &derived, &q.target_chain, object) {
                    Ok(believed) if &believed == correct => {}
                    Ok(believed) => out.push(format!("{}: gold {correct}, replay says {believed}", q.question_id)),
                    Err(e) => out.push(format!("{}: {e}", q.question_id)),
                }
            }
        }
        ItemDetails::Conversation {
            utterances,
            presence_events,
        } => match map_perceivers(utterances, presence_events) {
            Ok(derived) => {
                if item.annotation == AnnotationSource::Derived && derived != item.context {
                    out.push("audiences differ from the presence log".into());
                }
            }
            Err(e) => out.push(e.to_string()),
        },
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub kind: DatasetKind,
    /// Stories per belief question type, or conversation sets in total.
    pub count: usize,
    pub seed: u64,
    pub control_questions: bool,
}

fn item_seed(base: u64, index: usize) -> u64 {
    base.wrapping_mul(1_000_003).wrapping_add(index as u64)
}

/// Deterministic dataset generation.
pub fn generate(config: &GenerateConfig) -> Result<DatasetFile, HarnessError> {
    let mut items = Vec::new();
    match config.kind {
        DatasetKind::Tomi => {
            for qtype in QuestionType::TOMI_BELIEF {
                for i in 0..config.count {
                    let cfg = StoryConfig {
                        control_questions: config.control_questions,
                        ..StoryConfig::with_seed(item_seed(config.seed, i))
                    };
                    items.push(generate_story(&cfg, qtype).map_err(|e| HarnessError::Config(e.to_string()))?);
                }
            }
        }
        DatasetKind::Convo => {
            for i in 0..config.count {
                let scenario = if i % 2 == 0 { Scenario::TrueBelief } else { Scenario::FalseBelief };
                let cfg = MiniConvoConfig::with_seed(item_seed(config.seed, i));
                let convo = generate_mini_conversation(&cfg, scenario).map_err(|e| HarnessError::Config(e.to_string()))?;
                items.push(convo.into_benchmark_item());
            }
        }
        DatasetKind::Mixed => return Err(HarnessError::Config("generate either tomi or convo".into())),
    }
    let digest = prompt_digest(&serde_json::to_string(config)?);
    Ok(DatasetFile::new(config.kind, "generated", digest, items))
}

/// Item counts per question type, in a stable order.
pub fn question_type_counts(items: &[BenchmarkItem]) -> Vec<(QuestionType, usize)> {
    let mut counts: Vec<(QuestionType, usize)> = Vec::new();
    for q in items.iter().flat_map(|i| &i.questions) {
        match counts.iter_mut().find(|(t, _)| *t == q.qtype) {
            Some((_, n)) => *n += 1,
            None => counts.push((q.qtype, 1)),
        }
    }
    counts
}
