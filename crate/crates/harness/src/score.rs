//! Scores computed from run records alone.

use std::collections::BTreeMap;

use perceptom_core::eval::{
    dataset_perception_accuracy, grade, perception_accuracy, set_all_score, tom_accuracy, Dataset, GradedOutcome,
    Metric, QuestionSet, ScoreReport, ScoreRow,
};
use perceptom_core::item::Scenario;
use perceptom_core::pipeline::{MethodKind, Task};

use crate::record::{RecordKey, RunFile, RunRecord};
use crate::HarnessError;

/// Grade of a question record, recomputed from its final text. Failed
/// units count as wrong.
pub fn regrade(record: &RunRecord) -> Option<GradedOutcome> {
    let question = record.question.as_ref()?;
    let mut outcome = grade(record.final_text.as_deref().unwrap_or(""), question);
    if let Some(err) = &record.error {
        outcome.correct = false;
        outcome.ungradable = true;
        outcome.notes = Some(err.to_string());
    }
    Some(outcome)
}

/// Perception accuracy of a perception record, recomputed from its
/// parsed entries. Failed or unparseable units score 0.
pub fn rescore_perception(record: &RunRecord) -> Option<f64> {
    let gold = record.gold_context.as_ref()?;
    if record.error.is_some() {
        return Some(0.0);
    }
    let entries = record.perception.as_ref().map(|p| p.entries.as_slice()).unwrap_or(&[]);
    Some(perception_accuracy(entries, gold))
}

/// Records whose stored grade disagrees with a fresh re-grade.
pub fn audit(records: &[RunRecord]) -> Vec<RecordKey> {
    records
        .iter()
        .filter(|r| match r.task {
            Task::Perception => r.error.is_none() && rescore_perception(r) != r.perception_accuracy,
            Task::P2b | Task::Tom => r.error.is_none() && regrade(r).map(|o| o.correct) != r.outcome.as_ref().map(|o| o.correct),
        })
        .map(RunRecord::key)
        .collect()
}

type RunKey = (String, Task, MethodKind);

/// Builds the score report over any number of run files. Records for the
/// same unit from several files of one run collapse to the last one.
pub fn score_runs(runs: &[RunFile]) -> Result<ScoreReport, HarnessError> {
    let mut grouped: BTreeMap<RunKey, BTreeMap<RecordKey, &RunRecord>> = BTreeMap::new();
    let mut order: Vec<RunKey> = Vec::new();
    for run in runs {
        let key = (run.header.backend.clone(), run.header.task, run.header.method);
        if !grouped.contains_key(&key) {
            order.push(key.clone());
        }
        let slot = grouped.entry(key).or_default();
        for record in &run.records {
            slot.insert(record.key(), record);
        }
    }
    let mut rows = Vec::new();
    for key in order {
        let (backend, task, method) = &key;
        let records: Vec<&RunRecord> = grouped[&key].values().copied().collect();
        for dataset in [Dataset::Tomi, Dataset::Fantom] {
            for scenario in [Scenario::TrueBelief, Scenario::FalseBelief] {
                let slice: Vec<&RunRecord> = records
                    .iter()
                    .copied()
                    .filter(|r| r.dataset == dataset && r.scenario == Some(scenario))
                    .collect();
                if slice.is_empty() {
                    continue;
                }
                let row = |metric, value, denominator| ScoreRow {
                    backend: backend.clone(),
                    dataset,
                    task: *task,
                    method: *method,
                    scenario,
                    metric,
                    value,
                    denominator,
                };
                match task {
                    Task::Perception => {
                        let scores: Vec<f64> = slice.iter().filter_map(|r| rescore_perception(r)).collect();
                        rows.push(row(Metric::PerceptionAccuracy, dataset_perception_accuracy(&scores)?, scores.len()));
                    }
                    Task::P2b | Task::Tom => {
                        let outcomes: Vec<GradedOutcome> = slice.iter().filter_map(|r| regrade(r)).collect();
                        rows.push(row(Metric::TomAccuracy, tom_accuracy(&outcomes)?, outcomes.len()));
                        if dataset == Dataset::Fantom {
                            let sets = question_sets(&slice);
                            rows.push(row(Metric::SetAll, set_all_score(&sets)?, sets.len()));
                        }
                    }
                }
            }
        }
    }
    Ok(ScoreReport { rows })
}

fn question_sets(records: &[&RunRecord]) -> Vec<QuestionSet> {
    let mut sets: Vec<QuestionSet> = Vec::new();
    for record in records {
        let (Some(question), Some(outcome)) = (&record.question, regrade(record)) else {
            continue;
        };
        let set_id = record.question_set_id.clone().unwrap_or_else(|| record.item_id.clone());
        match sets.iter_mut().find(|s| s.set_id == set_id) {
            Some(set) => set.outcomes.push((question.qtype, outcome.correct)),
            None => sets.push(QuestionSet {
                set_id,
                outcomes: vec![(question.qtype, outcome.correct)],
            }),
        }
    }
    sets
}
