//! Run files: a header line, then one [`RunRecord`] per work unit.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use perceptom_core::backend::{prompt_digest, BackendError};
use perceptom_core::eval::{GradedOutcome, Dataset};
use perceptom_core::item::{Question, Scenario};
use perceptom_core::pipeline::{Intermediate, MethodKind, PerceptionEntry, Task};
use perceptom_core::world::AnnotatedContext;

use crate::HarnessError;

pub const RUN_SCHEMA: &str = "perceptom.run";
pub const RUN_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema: String,
    pub version: u32,
    pub run_id: String,
    pub method: MethodKind,
    pub task: Task,
    pub backend: String,
    pub dataset_digest: String,
}

impl RunHeader {
    /// The run id is a digest of what the run computes, so a resumed run
    /// keeps its id and a changed configuration gets a new one.
    pub fn new(method: MethodKind, task: Task, backend: &str, dataset_digest: &str) -> Self {
        let run_id = prompt_digest(&format!("{method}|{task}|{backend}|{dataset_digest}"))[..16].to_string();
        RunHeader {
            schema: RUN_SCHEMA.to_string(),
            version: RUN_VERSION,
            run_id,
            method,
            task,
            backend: backend.to_string(),
            dataset_digest: dataset_digest.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceptionRecord {
    pub entries: Vec<PerceptionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_ms: u64,
}

/// Everything needed to re-grade one work unit without the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub method: MethodKind,
    pub backend: String,
    pub task: Task,
    pub dataset: Dataset,
    pub item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_set_id: Option<String>,
    /// Question with its gold; absent for the perception task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<Question>,
    /// Gold annotation; present for the perception task only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_context: Option<AnnotatedContext>,
    pub prompts: Vec<String>,
    pub responses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediate: Option<Intermediate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perception: Option<PerceptionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_fallback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<GradedOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perception_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<BackendError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

pub type RecordKey = (String, Option<String>);

impl RunRecord {
    pub fn key(&self) -> RecordKey {
        (self.item_id.clone(), self.question_id.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunFile {
    pub header: RunHeader,
    pub records: Vec<RunRecord>,
    /// Bytes at the end of the file that did not form a complete line.
    pub partial_tail: usize,
}

impl RunFile {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        let partial_tail = text.len() - complete;
        let mut lines = text[..complete].lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| HarnessError::Schema("run file has no header".into()))?;
        let header: RunHeader =
            serde_json::from_str(first).map_err(|e| HarnessError::Schema(format!("bad run header: {e}")))?;
        if header.schema != RUN_SCHEMA || header.version != RUN_VERSION {
            return Err(HarnessError::Schema(format!(
                "expected {RUN_SCHEMA} v{RUN_VERSION}, found {} v{}",
                header.schema, header.version
            )));
        }
        let records = lines
            .map(|(n, line)| {
                serde_json::from_str(line).map_err(|e| HarnessError::Record {
                    line: n + 1,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<RunRecord>, _>>()?;
        Ok(RunFile {
            header,
            records,
            partial_tail,
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    /// Keys of records that completed without a backend error.
    pub fn done_keys(&self) -> HashSet<RecordKey> {
        self.records.iter().filter(|r| r.error.is_none()).map(RunRecord::key).collect()
    }
}

/// Appends records to a run file, one flushed line each.
pub struct RunWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl RunWriter {
    pub fn create(path: &Path, header: &RunHeader) -> Result<Self, HarnessError> {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut writer = RunWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        writer.line(header)?;
        Ok(writer)
    }

    /// Reopens an interrupted run. The partial last line and every failed
    /// record are dropped so their units run again without duplicates.
    pub fn resume(path: &Path, header: &RunHeader) -> Result<(Self, RunFile), HarnessError> {
        let mut existing = RunFile::load(path)?;
        if existing.header != *header {
            return Err(HarnessError::Config(format!(
                "{} belongs to run {} ({} {} on {}), not {}",
                path.display(),
                existing.header.run_id,
                existing.header.method,
                existing.header.task,
                existing.header.backend,
                header.run_id
            )));
        }
        existing.records.retain(|r| r.error.is_none());
        let mut seen = HashSet::new();
        existing.records.retain(|r| seen.insert(r.key()));
        let staging = path.with_extension("resume.tmp");
        {
            let mut writer = RunWriter::create(&staging, header)?;
            for record in &existing.records {
                writer.append(record)?;
            }
        }
        fs::rename(&staging, path).map_err(|e| HarnessError::io(path, e))?;
        let file = OpenOptions::new().append(true).open(path).map_err(|e| HarnessError::io(path, e))?;
        existing.partial_tail = 0;
        Ok((
            RunWriter {
                path: path.to_path_buf(),
                out: BufWriter::new(file),
            },
            existing,
        ))
    }

    pub fn append(&mut self, record: &RunRecord) -> Result<(), HarnessError> {
        self.line(record)
    }

    fn line<T: Serialize>(&mut self, value: &T) -> Result<(), HarnessError> {
        let path = self.path.clone();
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n").map_err(|e| HarnessError::io(&path, e))?;
        self.out.flush().map_err(|e| HarnessError::io(&path, e))
    }
}
