use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use perceptom_core::backend::{prompt_digest, TranscriptEntry};
use perceptom_core::pipeline::prompts::build_perception_prompt;
use perceptom_harness::dataset::DatasetFile;
use perceptom_harness::record::RunFile;

const STORY: &str = include_str!("../../../fixtures/appendix/ella_story.txt");
const MODEL_OUTPUT: &str = include_str!("../../../fixtures/appendix/ella_model_output.txt");

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn perceptom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perceptom"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = perceptom(dir, args);
    assert!(
        out.status.success(),
        "{args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn generate_is_deterministic_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stdout = ok(d, &["generate", "--kind", "tomi", "--seed", "7", "--out", "a.jsonl"]);
    assert!(stdout.contains("wrote 600 items"));
    assert!(stdout.contains("first_order_FB: 150"));
    ok(d, &["generate", "--kind", "tomi", "--seed", "7", "--out", "b.jsonl"]);
    assert_eq!(fs::read(d.join("a.jsonl")).unwrap(), fs::read(d.join("b.jsonl")).unwrap());
    assert!(ok(d, &["validate", "--dataset", "a.jsonl"]).contains("no violations"));
    ok(d, &["generate", "--kind", "convo", "--count", "0", "--out", "empty.jsonl"]);
    assert!(ok(d, &["validate", "--dataset", "empty.jsonl"]).contains("0 items"));
}

#[test]
fn validate_lists_violations_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--kind", "tomi", "--count", "1", "--out", "a.jsonl"]);
    let text = fs::read_to_string(d.join("a.jsonl")).unwrap();
    let broken = text.replacen("\"correct\":\"", "\"correct\":\"x", 1);
    assert_ne!(text, broken);
    fs::write(d.join("a.jsonl"), broken).unwrap();
    let out = perceptom(d, &["validate", "--dataset", "a.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("replay says"));
}

#[test]
fn annotate_fails_with_indexed_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let good = serde_json::json!({"id": "ok", "story": STORY});
    fs::write(d.join("in.jsonl"), format!("{good}\n{{\"id\": \"x\", \"story\": \"Ella flew away.\"}}\n")).unwrap();
    let out = perceptom(d, &["annotate", "--input", "in.jsonl", "--out", "out.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("record 2 (x)"));
    assert!(!d.join("out.jsonl").exists());
}

#[test]
fn replayed_perception_run_is_bit_stable_and_scores_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let record = serde_json::json!({"id": "ella", "story": STORY, "questions": [{"chain": ["Lucas"], "object": "boots"}]});
    fs::write(d.join("ella_in.jsonl"), format!("{record}\n")).unwrap();
    ok(d, &["annotate", "--input", "ella_in.jsonl", "--out", "ella.jsonl"]);
    let dataset = DatasetFile::load(&d.join("ella.jsonl")).unwrap();
    let prompt = build_perception_prompt(&dataset.items[0]).unwrap();
    let entry = TranscriptEntry {
        prompt_digest: prompt_digest(&prompt),
        prompt,
        response: Some(MODEL_OUTPUT.to_string()),
        error: None,
        latency_ms: 0,
        attempt: 1,
    };
    fs::write(d.join("replay.jsonl"), format!("{}\n", serde_json::to_string(&entry).unwrap())).unwrap();
    fs::write(d.join("replay.toml"), "kind = \"replay\"\nid = \"appendix\"\ntranscript = \"replay.jsonl\"\n").unwrap();
    let args = |out: &'static str| {
        [
            "run", "--dataset", "ella.jsonl", "--method", "vanilla", "--task", "perception",
            "--backend-config", "replay.toml", "--out", out,
        ]
    };
    ok(d, &args("r1.jsonl"));
    ok(d, &args("r2.jsonl"));
    assert_eq!(fs::read(d.join("r1.jsonl")).unwrap(), fs::read(d.join("r2.jsonl")).unwrap());
    let run = RunFile::load(&d.join("r1.jsonl")).unwrap();
    assert_eq!(run.records.len(), 1);
    assert!(run.records[0].timing.is_none());

    let table = ok(d, &["score", "--runs", "r1.jsonl", "--csv", "s.csv", "--json", "s.json"]);
    assert!(table.contains("| ToMi | appendix | - | - | - | 0.917 | - | - |"), "{table}");
    assert!(fs::read_to_string(d.join("s.csv")).unwrap().contains("perception_accuracy"));
    assert!(fs::read_to_string(d.join("s.json")).unwrap().contains("\"rows\""));
}

#[test]
fn oracle_run_then_score_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--kind", "convo", "--count", "4", "--out", "c.jsonl"]);
    let run = [
        "run", "--dataset", "c.jsonl", "--method", "perceptom_oracle", "--task", "tom", "--backend-config",
        "perfect", "--out", "r.jsonl", "--concurrency", "3",
    ];
    assert!(ok(d, &run).contains("24 executed"));
    let out = perceptom(d, &run);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--resume"));
    let mut resumed = run.to_vec();
    resumed.push("--resume");
    assert!(ok(d, &resumed).contains("0 executed, 24 skipped"));
    let table = ok(d, &["score", "--runs", "r.jsonl"]);
    assert!(table.contains("| perfect | PercepToM+Oracle | - | - | 1.000 | 1.000 |"), "{table}");
}

#[test]
fn correlate_reads_report_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let table4 = fixture("reports/table4.csv");
    let table4 = table4.to_str().unwrap();
    let stdout = ok(d, &["correlate", "--reports", table4, "--json", "r.json"]);
    assert_eq!(stdout.lines().filter(|l| l.ends_with("| 8 |")).count(), 8);
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 8);

    let single = "backend,dataset,task,method,scenario,metric,value,denominator\n\
                  m,tomi,perception,vanilla,true_belief,perception_accuracy,0.5,1\n\
                  m,tomi,tom,vanilla,true_belief,tom_accuracy,0.5,1\n";
    fs::write(d.join("one.csv"), single).unwrap();
    let out = perceptom(d, &["correlate", "--reports", "one.csv", "one.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = perceptom(
        dir.path(),
        &["run", "--dataset", "x", "--method", "magic", "--task", "tom", "--backend-config", "perfect", "--out", "o"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
}
