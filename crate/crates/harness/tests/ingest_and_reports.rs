use perceptom_core::eval::{correlate, Dataset, Metric, MetricError, Precursor, ScoreReport, ScoreRow};
use perceptom_core::item::{GoldAnswer, Scenario};
use perceptom_core::pipeline::prompts::annotation_to_wire;
use perceptom_core::pipeline::{MethodKind, Task};
use perceptom_harness::annotate::annotate_text;
use perceptom_harness::dataset::DatasetKind;

const STORY: &str = include_str!("../../../fixtures/appendix/ella_story.txt");
const GOLD_WIRE: &str = include_str!("../../../fixtures/appendix/ella_gold_wire.json");
const TABLE4: &str = include_str!("../../../fixtures/reports/table4.csv");

fn audiences(text: &str) -> Vec<Vec<String>> {
    let annotated = annotate_text(text, "t", false);
    assert!(annotated.errors.is_empty(), "{:?}", annotated.errors);
    annotated.dataset.items[0]
        .context
        .units
        .iter()
        .map(|u| u.perceivers.names().to_vec())
        .collect()
}

#[test]
fn plain_story_gets_the_twelve_gold_sets() {
    let annotated = annotate_text(STORY, "ella", false);
    assert!(annotated.errors.is_empty());
    assert_eq!(annotated.dataset.header.kind, DatasetKind::Tomi);
    let item = &annotated.dataset.items[0];
    assert_eq!(item.context.len(), 12);
    assert_eq!(annotation_to_wire(&item.context), GOLD_WIRE.trim_end());
    assert!(annotated.dataset.violations().is_empty());
}

#[test]
fn story_records_carry_belief_questions() {
    let line = serde_json::json!({"id": "ella", "story": STORY, "questions": [{"chain": ["Lucas"], "object": "boots"}]});
    let annotated = annotate_text(&format!("{line}\n"), "in", true);
    let q = &annotated.dataset.items[0].questions[0];
    match &q.gold {
        GoldAnswer::ContainerPair { correct, foil, .. } => {
            assert_eq!(correct, "cupboard");
            assert_eq!(foil.as_deref(), Some("pantry"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn marked_five_line_transcript_gets_presence_audiences() {
    let text = "Noah: Hi Emma, hi Liam.\n\
                Emma: Hi both. I have to run, bye!\n\
                [[leave Emma]]\n\
                Liam: Bye Emma.\n\
                Noah: Liam, the party moved to Friday.\n\
                [[join Emma]]\n\
                Emma: I'm back!\n";
    let expected: Vec<Vec<&str>> = vec![
        vec!["Noah", "Emma", "Liam"],
        vec!["Emma", "Noah", "Liam"],
        vec!["Liam", "Noah"],
        vec!["Noah", "Liam"],
        vec!["Emma", "Noah", "Liam"],
    ];
    assert_eq!(audiences(text), expected);
}

#[test]
fn conversation_records_accept_the_conversation_field() {
    let line = serde_json::json!({"id": "c1", "conversation": "A: hi\nB: hello", "scenario": "true_belief"});
    let annotated = annotate_text(&line.to_string(), "in", true);
    assert!(annotated.errors.is_empty(), "{:?}", annotated.errors);
    let item = &annotated.dataset.items[0];
    assert_eq!(item.cast, ["A", "B"]);
    assert_eq!(item.scenario, Some(Scenario::TrueBelief));
    assert_eq!(annotated.dataset.header.kind, DatasetKind::Convo);
}

#[test]
fn failures_are_reported_with_their_record_index() {
    let good = serde_json::json!({"id": "ok", "story": STORY});
    let bad_story = serde_json::json!({"id": "moon", "story": "Ella flew to the moon."});
    let absent = serde_json::json!({"id": "ghost", "transcript": "A: hi\n[[leave A]]\nB: bye\nA: still here"});
    let input = format!("{good}\n{bad_story}\nnot json\n{absent}\n");
    let annotated = annotate_text(&input, "in", true);
    let indexed: Vec<(usize, Option<&str>)> = annotated.errors.iter().map(|e| (e.index, e.id.as_deref())).collect();
    assert_eq!(indexed, [(2, Some("moon")), (3, None), (4, Some("ghost"))]);
    assert_eq!(annotated.dataset.items.len(), 1);
    assert!(annotated.errors[0].to_string().starts_with("record 2 (moon)"));
}

fn row(backend: &str, task: Task, metric: Metric, scenario: Scenario, value: f64) -> ScoreRow {
    ScoreRow {
        backend: backend.into(),
        dataset: Dataset::Tomi,
        task,
        method: MethodKind::Vanilla,
        scenario,
        metric,
        value,
        denominator: 10,
    }
}

fn synthetic(backends: &[(&str, f64, f64)]) -> ScoreReport {
    let mut rows = Vec::new();
    for (name, perception, tom) in backends {
        for scenario in [Scenario::TrueBelief, Scenario::FalseBelief] {
            rows.push(row(name, Task::Perception, Metric::PerceptionAccuracy, scenario, *perception));
            rows.push(row(name, Task::Tom, Metric::TomAccuracy, scenario, *tom));
        }
    }
    ScoreReport { rows }
}

#[test]
fn identical_reports_are_degenerate() {
    let one = synthetic(&[("m", 0.5, 0.7)]);
    let merged = ScoreReport::merge([one.clone(), one]);
    assert!(matches!(correlate(&merged), Err(MetricError::DegenerateInput(_))));
    let flat = synthetic(&[("a", 0.5, 0.7), ("b", 0.5, 0.9)]);
    assert!(matches!(correlate(&flat), Err(MetricError::DegenerateInput(_))));
}

#[test]
fn perfectly_linear_reports_correlate_at_one() {
    let report = synthetic(&[("a", 0.2, 0.1), ("b", 0.4, 0.5), ("c", 0.9, 1.5)]);
    let rows = correlate(&report).unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r.precursor, Precursor::Perception);
        assert!((r.r - 1.0).abs() < 1e-12, "{}", r.r);
        assert_eq!(r.n, 3);
    }
}

#[test]
fn published_precursor_table_correlates_as_numpy_does() {
    let report = ScoreReport::read_csv(TABLE4.as_bytes()).unwrap();
    assert_eq!(report.backends().len(), 8);
    let rows = correlate(&report).unwrap();
    // numpy.corrcoef over the same columns.
    let expected = [
        (Dataset::Tomi, Scenario::TrueBelief, Precursor::Perception, -0.103194),
        (Dataset::Tomi, Scenario::TrueBelief, Precursor::P2b, 0.200185),
        (Dataset::Tomi, Scenario::FalseBelief, Precursor::Perception, 0.519648),
        (Dataset::Tomi, Scenario::FalseBelief, Precursor::P2b, 0.575391),
        (Dataset::Fantom, Scenario::TrueBelief, Precursor::Perception, 0.14662),
        (Dataset::Fantom, Scenario::TrueBelief, Precursor::P2b, 0.683299),
        (Dataset::Fantom, Scenario::FalseBelief, Precursor::Perception, 0.294394),
        (Dataset::Fantom, Scenario::FalseBelief, Precursor::P2b, 0.64148),
    ];
    assert_eq!(rows.len(), expected.len());
    for (d, s, p, r) in expected {
        let got = rows.iter().find(|x| x.dataset == d && x.scenario == s && x.precursor == p).unwrap();
        assert!(got.r.is_finite() && (-1.0..=1.0).contains(&got.r));
        assert!((got.r - r).abs() < 1e-5, "{d:?} {s:?} {p:?}: {} vs {r}", got.r);
        assert_eq!(got.n, 8);
    }
}

#[test]
fn score_reports_round_trip_through_csv() {
    let report = ScoreReport::read_csv(TABLE4.as_bytes()).unwrap();
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    assert_eq!(ScoreReport::read_csv(buf.as_slice()).unwrap(), report);
}
