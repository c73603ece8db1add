use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use perceptom_core::eval::{correlate, correlations_to_markdown, ScoreReport};
use perceptom_core::pipeline::{MethodKind, Task};
use perceptom_harness::annotate::annotate_file;
use perceptom_harness::backends::BackendChoice;
use perceptom_harness::dataset::{generate, question_type_counts, DatasetFile, DatasetKind, GenerateConfig};
use perceptom_harness::record::{RunFile, RunHeader};
use perceptom_harness::runner::{run_to_file, sample_items, RunOptions};
use perceptom_harness::score::{audit, score_runs};

#[derive(Parser)]
#[command(name = "perceptom", version, about = "Perception-annotated theory-of-mind benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Generate {
        #[arg(long, value_enum)]
        kind: DatasetKind,
        /// Stories per belief question type (default 150), or conversation sets (default 200).
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also attach reality and memory questions to stories.
        #[arg(long)]
        control_questions: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Annotate raw stories or marked transcripts.
    Annotate {
        /// A JSONL file of records, or one plain-text story or transcript.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one method on one task over a dataset.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        method: MethodKind,
        #[arg(long)]
        task: Task,
        /// `perfect`, or a TOML backend configuration file.
        #[arg(long)]
        backend_config: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        /// Continue an interrupted run in place.
        #[arg(long)]
        resume: bool,
        /// Run on a seeded sample of this many items.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score run files.
    Score {
        #[arg(long = "runs", required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        markdown: Option<PathBuf>,
        /// Do not bold the best method per model and column.
        #[arg(long)]
        no_bold: bool,
    },
    /// Correlate precursor metrics with ToM scores across backends.
    Correlate {
        /// Score reports in CSV form.
        #[arg(long = "reports", required = true, num_args = 1..)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Check a dataset file against the world model.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate {
            kind,
            count,
            seed,
            control_questions,
            out,
        } => cmd_generate(kind, count, seed, control_questions, &out),
        Command::Annotate { input, out } => cmd_annotate(&input, &out),
        Command::Run {
            dataset,
            method,
            task,
            backend_config,
            out,
            concurrency,
            resume,
            sample,
            seed,
        } => cmd_run(&dataset, method, task, &backend_config, &out, concurrency, resume, sample, seed),
        Command::Score {
            runs,
            csv,
            json,
            markdown,
            no_bold,
        } => cmd_score(&runs, csv.as_deref(), json.as_deref(), markdown.as_deref(), !no_bold),
        Command::Correlate { reports, json } => cmd_correlate(&reports, json.as_deref()),
        Command::Validate { dataset } => cmd_validate(&dataset),
    }
}

fn cmd_generate(kind: DatasetKind, count: Option<usize>, seed: u64, control_questions: bool, out: &Path) -> Result<ExitCode> {
    let count = count.unwrap_or(match kind {
        DatasetKind::Convo => 200,
        _ => 150,
    });
    let file = generate(&GenerateConfig {
        kind,
        count,
        seed,
        control_questions,
    })?;
    file.save(out)?;
    println!("wrote {} items to {}", file.items.len(), out.display());
    for (qtype, n) in question_type_counts(&file.items) {
        println!("  {qtype}: {n}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_annotate(input: &Path, out: &Path) -> Result<ExitCode> {
    let annotated = annotate_file(input)?;
    for error in &annotated.errors {
        eprintln!("{error}");
    }
    if !annotated.errors.is_empty() {
        eprintln!("{} record(s) failed; nothing written", annotated.errors.len());
        return Ok(ExitCode::FAILURE);
    }
    annotated.dataset.save(out)?;
    println!("wrote {} annotated items to {}", annotated.dataset.items.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    dataset: &Path,
    method: MethodKind,
    task: Task,
    backend_config: &str,
    out: &Path,
    concurrency: usize,
    resume: bool,
    sample: Option<usize>,
    seed: u64,
) -> Result<ExitCode> {
    let file = DatasetFile::load(dataset).with_context(|| format!("loading {}", dataset.display()))?;
    let mut digest = file.digest();
    let items = match sample {
        Some(n) => {
            digest = format!("{digest}:sample={n}:seed={seed}");
            sample_items(&file.items, n, seed)
        }
        None => file.items.clone(),
    };
    let choice = BackendChoice::parse_arg(backend_config)?;
    let loaded = choice.build(&items)?;
    let header = RunHeader::new(method, task, &choice.id(), &digest);
    let options = RunOptions {
        method,
        task,
        concurrency,
        record_timing: choice.is_live(),
    };
    let result = run_to_file(out, resume, &header, &options, loaded.backend(), &items);
    if choice.is_live() {
        let path = transcript_path(out);
        let sink = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        loaded.transcript().write_jsonl(BufWriter::new(sink))?;
    }
    let summary = result?;
    println!(
        "run {}: {} executed, {} skipped, {} failed -> {}",
        header.run_id,
        summary.executed,
        summary.skipped,
        summary.failed,
        out.display()
    );
    Ok(if summary.failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn transcript_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".transcript.jsonl");
    out.with_file_name(name)
}

fn cmd_score(
    runs: &[PathBuf],
    csv: Option<&Path>,
    json: Option<&Path>,
    markdown: Option<&Path>,
    highlight_best: bool,
) -> Result<ExitCode> {
    let mut files = Vec::with_capacity(runs.len());
    for path in runs {
        let run = RunFile::load(path).with_context(|| format!("loading {}", path.display()))?;
        if run.partial_tail > 0 {
            eprintln!("{}: ignoring {} bytes of a partial last line", path.display(), run.partial_tail);
        }
        for (item, question) in audit(&run.records) {
            eprintln!(
                "{}: stored grade of {item} {} differs from a re-grade",
                path.display(),
                question.unwrap_or_default()
            );
        }
        let unplaced = run.records.iter().filter(|r| r.scenario.is_none()).count();
        if unplaced > 0 {
            eprintln!("{}: {unplaced} record(s) have no scenario and are not scored", path.display());
        }
        files.push(run);
    }
    let report = score_runs(&files)?;
    let table = format!("{}\n{}", report.to_markdown_with(highlight_best), report.precursor_markdown());
    print!("{table}");
    if let Some(path) = csv {
        let out = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(BufWriter::new(out))?;
    }
    if let Some(path) = json {
        fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = markdown {
        fs::write(path, &table).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_correlate(reports: &[PathBuf], json: Option<&Path>) -> Result<ExitCode> {
    let mut merged = Vec::with_capacity(reports.len());
    for path in reports {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        merged.push(ScoreReport::read_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?);
    }
    let report = ScoreReport::merge(merged);
    let rows = correlate(&report)?;
    if rows.is_empty() {
        bail!("no dataset and scenario has both a precursor and a ToM score");
    }
    print!("{}", correlations_to_markdown(&rows));
    if let Some(path) = json {
        let mut out = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(&mut out, &rows)?;
        out.write_all(b"\n")?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(dataset: &Path) -> Result<ExitCode> {
    let file = DatasetFile::load_unchecked(dataset).with_context(|| format!("loading {}", dataset.display()))?;
    let violations = file.violations();
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        println!("{}: {} items, no violations", dataset.display(), file.items.len());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{} violation(s)", violations.len());
        Ok(ExitCode::FAILURE)
    }
}
