//! Score tables and cross-backend correlation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use super::{pearson, MetricError};
use crate::item::Scenario;
use crate::pipeline::{MethodKind, Task};
use crate::world::ContextKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Tomi,
    Fantom,
}

impl Dataset {
    pub fn label(&self) -> &'static str {
        match self {
            Dataset::Tomi => "ToMi",
            Dataset::Fantom => "FANToM",
        }
    }

    /// Metric reported as the ToM score for this dataset.
    pub fn headline(&self) -> Metric {
        match self {
            Dataset::Tomi => Metric::TomAccuracy,
            Dataset::Fantom => Metric::SetAll,
        }
    }
}

impl From<ContextKind> for Dataset {
    fn from(kind: ContextKind) -> Self {
        match kind {
            ContextKind::Narrative => Dataset::Tomi,
            ContextKind::Conversation => Dataset::Fantom,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PerceptionAccuracy,
    TomAccuracy,
    SetAll,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub backend: String,
    pub dataset: Dataset,
    pub task: Task,
    pub method: MethodKind,
    pub scenario: Scenario,
    pub metric: Metric,
    pub value: f64,
    /// Questions, question sets or contexts behind the value.
    pub denominator: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
}

impl ScoreReport {
    pub fn value(
        &self,
        backend: &str,
        dataset: Dataset,
        task: Task,
        method: MethodKind,
        scenario: Scenario,
        metric: Metric,
    ) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.backend == backend
                    && r.dataset == dataset
                    && r.task == task
                    && r.method == method
                    && r.scenario == scenario
                    && r.metric == metric
            })
            .map(|r| r.value)
    }

    pub fn backends(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.backend) {
                seen.push(r.backend.clone());
            }
        }
        seen
    }

    pub fn merge(reports: impl IntoIterator<Item = ScoreReport>) -> ScoreReport {
        ScoreReport {
            rows: reports.into_iter().flat_map(|r| r.rows).collect(),
        }
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut writer = csv::Writer::from_writer(out);
        for row in &self.rows {
            writer.serialize(row)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(input: R) -> Result<ScoreReport, csv::Error> {
        let rows = csv::Reader::from_reader(input)
            .deserialize()
            .collect::<Result<Vec<ScoreRow>, _>>()?;
        Ok(ScoreReport { rows })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Model × method rows against dataset × scenario columns, holding the
    /// ToM-task headline metric. The best value per model and column is bold.
    pub fn to_markdown(&self) -> String {
        self.to_markdown_with(true)
    }

    pub fn to_markdown_with(&self, highlight_best: bool) -> String {
        let columns: Vec<(Dataset, Scenario)> = [Dataset::Tomi, Dataset::Fantom]
            .into_iter()
            .flat_map(|d| [(d, Scenario::TrueBelief), (d, Scenario::FalseBelief)])
            .collect();
        let mut out = String::from("| Model | Method |");
        for (d, s) in &columns {
            let _ = write!(out, " {} {} |", d.label(), s.short());
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---:|".repeat(columns.len()));
        out.push('\n');

        for backend in self.backends() {
            let methods: BTreeSet<MethodKind> = self
                .rows
                .iter()
                .filter(|r| r.backend == backend && r.task == Task::Tom)
                .map(|r| r.method)
                .collect();
            let cell = |m: MethodKind, (d, s): (Dataset, Scenario)| {
                self.value(&backend, d, Task::Tom, m, s, d.headline())
            };
            let best: Vec<Option<f64>> = columns
                .iter()
                .map(|c| methods.iter().filter_map(|m| cell(*m, *c)).reduce(f64::max))
                .collect();
            for (i, method) in methods.iter().enumerate() {
                let model = if i == 0 { backend.as_str() } else { "" };
                let _ = write!(out, "| {model} | {} |", method.display_name());
                for (c, best) in columns.iter().zip(&best) {
                    match cell(*method, *c) {
                        Some(v) if highlight_best && Some(v) == *best && methods.len() > 1 => {
                            let _ = write!(out, " **{v:.3}** |");
                        }
                        Some(v) => {
                            let _ = write!(out, " {v:.3} |");
                        }
                        None => out.push_str(" - |"),
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    /// Perception, perception-to-belief and ToM columns per scenario, one
    /// row per dataset and model, all taken from vanilla runs.
    pub fn precursor_markdown(&self) -> String {
        let mut out = String::from(
            "| Dataset | Model | TB Perception | TB P2B | TB ToM | FB Perception | FB P2B | FB ToM |\n|---|---|---:|---:|---:|---:|---:|---:|\n",
        );
        for dataset in [Dataset::Tomi, Dataset::Fantom] {
            for backend in self.backends() {
                let cells: Vec<Option<f64>> = [Scenario::TrueBelief, Scenario::FalseBelief]
                    .into_iter()
                    .flat_map(|s| Precursor::ALL.map(|p| p.value(self, &backend, dataset, s)))
                    .collect();
                if cells.iter().all(Option::is_none) {
                    continue;
                }
                let _ = write!(out, "| {} | {backend} |", dataset.label());
                for c in cells {
                    match c {
                        Some(v) => {
                            let _ = write!(out, " {v:.3} |");
                        }
                        None => out.push_str(" - |"),
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Columns of the precursor table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precursor {
    Perception,
    P2b,
    Tom,
}

impl Precursor {
    pub const ALL: [Precursor; 3] = [Precursor::Perception, Precursor::P2b, Precursor::Tom];

    /// Perception accuracy comes from any method's perception-task run; the
    /// other two are the vanilla headline metric of their task.
    pub fn value(&self, report: &ScoreReport, backend: &str, dataset: Dataset, scenario: Scenario) -> Option<f64> {
        match self {
            Precursor::Perception => MethodKind::ALL.into_iter().find_map(|m| {
                report.value(backend, dataset, Task::Perception, m, scenario, Metric::PerceptionAccuracy)
            }),
            Precursor::P2b => report.value(backend, dataset, Task::P2b, MethodKind::Vanilla, scenario, dataset.headline()),
            Precursor::Tom => report.value(backend, dataset, Task::Tom, MethodKind::Vanilla, scenario, dataset.headline()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub dataset: Dataset,
    pub scenario: Scenario,
    pub precursor: Precursor,
    pub r: f64,
    pub n: usize,
    pub backends: Vec<String>,
}

/// Pearson r between each precursor metric and ToM across backends, per
/// dataset and scenario. Slices with no data are skipped; slices with fewer
/// than two backends or no variance are errors.
pub fn correlate(report: &ScoreReport) -> Result<Vec<CorrelationRow>, MetricError> {
    let mut out = Vec::new();
    for dataset in [Dataset::Tomi, Dataset::Fantom] {
        for scenario in [Scenario::TrueBelief, Scenario::FalseBelief] {
            for precursor in [Precursor::Perception, Precursor::P2b] {
                let mut points: BTreeMap<usize, (String, f64, f64)> = BTreeMap::new();
                for (i, backend) in report.backends().into_iter().enumerate() {
                    let x = precursor.value(report, &backend, dataset, scenario);
                    let y = Precursor::Tom.value(report, &backend, dataset, scenario);
                    if let (Some(x), Some(y)) = (x, y) {
                        points.insert(i, (backend, x, y));
                    }
                }
                if points.is_empty() {
                    continue;
                }
                let xs: Vec<f64> = points.values().map(|p| p.1).collect();
                let ys: Vec<f64> = points.values().map(|p| p.2).collect();
                let r = pearson(&xs, &ys).map_err(|e| {
                    MetricError::DegenerateInput(format!(
                        "{} {} {:?}: {e}",
                        dataset.label(),
                        scenario.short(),
                        precursor
                    ))
                })?;
                out.push(CorrelationRow {
                    dataset,
                    scenario,
                    precursor,
                    r,
                    n: xs.len(),
                    backends: points.into_values().map(|p| p.0).collect(),
                });
            }
        }
    }
    Ok(out)
}

pub fn correlations_to_markdown(rows: &[CorrelationRow]) -> String {
    let mut out = String::from("| Dataset | Scenario | Precursor | r | n |\n|---|---|---|---:|---:|\n");
    for row in rows {
        let precursor = match row.precursor {
            Precursor::Perception => "Perception",
            Precursor::P2b => "Perception-to-Belief",
            Precursor::Tom => "ToM",
        };
        let _ = writeln!(
            out,
            "| {} | {} | {precursor} | {:.3} | {} |",
            row.dataset.label(),
            row.scenario.short(),
            row.r,
            row.n
        );
    }
    out
}
