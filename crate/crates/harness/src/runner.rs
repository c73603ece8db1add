//! Fans work units out over worker threads and appends their records in
//! dataset order.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use perceptom_core::backend::{prompt_digest, Backend};
use perceptom_core::eval::{grade, perception_accuracy, Dataset};
use perceptom_core::item::{BenchmarkItem, Question};
use perceptom_core::pipeline::{
    run_perception, run_question_task, MethodKind, MethodSpec, PipelineError, Task,
};

use crate::record::{PerceptionRecord, RecordKey, RunHeader, RunRecord, RunWriter, Timing};
use crate::HarnessError;

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub method: MethodKind,
    pub task: Task,
    pub concurrency: usize,
    pub record_timing: bool,
}

/// One backend interaction sequence: a context for the perception task,
/// a question otherwise.
#[derive(Clone, Copy, Debug)]
pub struct WorkUnit<'a> {
    pub item: &'a BenchmarkItem,
    pub question: Option<&'a Question>,
}

impl WorkUnit<'_> {
    pub fn key(&self) -> RecordKey {
        (self.item.item_id.clone(), self.question.map(|q| q.question_id.clone()))
    }
}

pub fn work_units(items: &[BenchmarkItem], task: Task) -> Vec<WorkUnit<'_>> {
    match task {
        Task::Perception => items.iter().map(|item| WorkUnit { item, question: None }).collect(),
        Task::P2b | Task::Tom => items
            .iter()
            .flat_map(|item| item.questions.iter().map(move |q| WorkUnit { item, question: Some(q) }))
            .collect(),
    }
}

/// Deterministic subset of `n` items chosen by seed, kept in dataset order.
pub fn sample_items(items: &[BenchmarkItem], n: usize, seed: u64) -> Vec<BenchmarkItem> {
    let mut ranked: Vec<(String, usize)> = items
        .iter()
        .enumerate()
        .map(|(i, item)| (prompt_digest(&format!("{seed}:{}", item.item_id)), i))
        .collect();
    ranked.sort();
    let mut keep: Vec<usize> = ranked.into_iter().take(n).map(|(_, i)| i).collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| items[i].clone()).collect()
}

fn base_record(header: &RunHeader, unit: &WorkUnit<'_>) -> RunRecord {
    let item = unit.item;
    RunRecord {
        run_id: header.run_id.clone(),
        method: header.method,
        backend: header.backend.clone(),
        task: header.task,
        dataset: Dataset::from(item.kind()),
        item_id: item.item_id.clone(),
        question_id: unit.question.map(|q| q.question_id.clone()),
        scenario: unit.question.and_then(|q| q.qtype.scenario()).or(item.scenario),
        question_set_id: item.question_set_id.clone(),
        question: unit.question.cloned(),
        gold_context: unit.question.is_none().then(|| item.context.clone()),
        prompts: Vec::new(),
        responses: Vec::new(),
        final_text: None,
        intermediate: None,
        perception: None,
        parse_fallback: None,
        outcome: None,
        perception_accuracy: None,
        error: None,
        timing: None,
    }
}

/// Runs one unit. Backend failures become error records; anything else
/// (bad prompts, mismatched methods) aborts the run.
pub fn execute(
    header: &RunHeader,
    options: &RunOptions,
    backend: &dyn Backend,
    unit: &WorkUnit<'_>,
) -> Result<RunRecord, HarnessError> {
    let started = Instant::now();
    let mut record = base_record(header, unit);
    let spec = MethodSpec::for_item(options.method, unit.item);
    let result = match unit.question {
        None => run_perception(backend, unit.item).map(|answer| {
            let (entries, parse_error) = match answer.parsed {
                Ok(parsed) => (parsed.entries, None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            };
            record.perception_accuracy = Some(perception_accuracy(&entries, &unit.item.context));
            record.perception = Some(PerceptionRecord { entries, parse_error });
            record.prompts = vec![answer.prompt];
            record.final_text = Some(answer.response.clone());
            record.responses = vec![answer.response];
        }),
        Some(question) => run_question_task(options.task, spec, backend, unit.item, question).map(|answer| {
            record.outcome = Some(grade(&answer.final_text, question));
            record.final_text = Some(answer.final_text);
            record.prompts = answer.prompts_used;
            record.responses = answer.responses;
            record.intermediate = answer.intermediate;
            record.parse_fallback = answer.parse_fallback;
        }),
    };
    match result {
        Ok(()) => {}
        Err(PipelineError::Backend(e)) => record.error = Some(e),
        Err(e) => return Err(e.into()),
    }
    if options.record_timing {
        record.timing = Some(Timing {
            elapsed_ms: started.elapsed().as_millis() as u64,
        });
    }
    Ok(record)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Executes every unit not in `done` and appends its record.
///
/// Workers pull units in order; the calling thread buffers finished records
/// and writes them in unit order, so the file layout does not depend on
/// scheduling.
pub fn run_units(
    header: &RunHeader,
    options: &RunOptions,
    backend: &dyn Backend,
    units: &[WorkUnit<'_>],
    done: &HashSet<RecordKey>,
    writer: &mut RunWriter,
) -> Result<RunSummary, HarnessError> {
    let pending: Vec<&WorkUnit<'_>> = units.iter().filter(|u| !done.contains(&u.key())).collect();
    let mut summary = RunSummary {
        skipped: units.len() - pending.len(),
        ..RunSummary::default()
    };
    let next = AtomicUsize::new(0);
    let workers = options.concurrency.clamp(1, pending.len().max(1));
    thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, Result<RunRecord, HarnessError>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(unit) = pending.get(i) else { break };
                let result = execute(header, options, backend, unit);
                let failed = result.is_err();
                if tx.send((i, result)).is_err() || failed {
                    next.store(pending.len(), Ordering::SeqCst);
                    break;
                }
            });
        }
        drop(tx);
        let mut buffer = BTreeMap::new();
        let mut expected = 0;
        for (i, result) in rx {
            match result {
                Ok(record) => buffer.insert(i, record),
                Err(e) => {
                    next.store(pending.len(), Ordering::SeqCst);
                    return Err(e);
                }
            };
            while let Some(record) = buffer.remove(&expected) {
                if record.error.is_some() {
                    summary.failed += 1;
                }
                writer.append(&record)?;
                summary.executed += 1;
                expected += 1;
            }
        }
        Ok(())
    })?;
    Ok(summary)
}

/// Opens or resumes the run file at `out`, then runs what is missing.
pub fn run_to_file(
    out: &Path,
    resume: bool,
    header: &RunHeader,
    options: &RunOptions,
    backend: &dyn Backend,
    items: &[BenchmarkItem],
) -> Result<RunSummary, HarnessError> {
    let units = work_units(items, options.task);
    let (mut writer, done) = if out.exists() {
        if !resume {
            return Err(HarnessError::Config(format!(
                "{} already exists; pass --resume to continue it",
                out.display()
            )));
        }
        let (writer, existing) = RunWriter::resume(out, header)?;
        (writer, existing.done_keys())
    } else {
        (RunWriter::create(out, header)?, HashSet::new())
    };
    run_units(header, options, backend, &units, &done, &mut writer)
}
