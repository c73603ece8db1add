//! Answer grading and the benchmark metrics.

pub mod report;

use std::collections::{BTreeMap, HashMap};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::item::{ChoiceLabel, GoldAnswer, Question, QuestionType};
use crate::pipeline::{match_units, normalize, PerceptionEntry};
use crate::world::AnnotatedContext;

pub use report::{correlate, correlations_to_markdown, CorrelationRow, Dataset, Metric, Precursor, ScoreReport, ScoreRow};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("no values to aggregate")]
    EmptyInput,
    #[error("question set {0} does not cover all six question types")]
    IncompleteSet(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedOutcome {
    pub question_id: String,
    pub correct: bool,
    pub grader: String,
    pub normalized_answer: String,
    /// True when no decision token could be found; such answers count as wrong.
    #[serde(default)]
    pub ungradable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

fn word_regex(token: &str) -> Regex {
    Regex::new(&format!(r"(?i)\b{}\b", regex::escape(token))).expect("escaped token is a valid pattern")
}

fn has_word(haystack: &str, token: &str) -> bool {
    word_regex(token).is_match(haystack)
}

fn outcome(question_id: &str, grader: &str, answer: &str, correct: bool) -> GradedOutcome {
    GradedOutcome {
        question_id: question_id.to_string(),
        correct,
        grader: grader.to_string(),
        normalized_answer: normalize(answer),
        ungradable: false,
        notes: None,
    }
}

fn ungradable(question_id: &str, grader: &str, answer: &str, note: &str) -> GradedOutcome {
    GradedOutcome {
        ungradable: true,
        notes: Some(note.to_string()),
        ..outcome(question_id, grader, answer, false)
    }
}

/// Location answers: the believed container must appear as a word and the
/// alternative container must not.
pub fn grade_tomi(question_id: &str, answer: &str, correct: &str, foil: Option<&str>) -> GradedOutcome {
    let hit = has_word(answer, correct);
    let foil_hit = foil.is_some_and(|f| f != correct && has_word(answer, f));
    let mut graded = outcome(question_id, "container_presence", answer, hit && !foil_hit);
    if foil_hit {
        graded.notes = Some("alternative container mentioned".to_string());
    }
    graded
}

fn chosen_label(answer: &str, option_a: &str, option_b: &str) -> Option<ChoiceLabel> {
    let lower = answer.trim().to_lowercase();
    let letter = |c: &str| match c {
        "a" => Some(ChoiceLabel::A),
        _ => Some(ChoiceLabel::B),
    };
    let paren = Regex::new(r"\(([ab])\)").expect("static pattern");
    if let Some(c) = paren.captures(&lower) {
        return letter(&c[1]);
    }
    let leading = Regex::new(r"^([ab])(?:[\s).:,]|$)").expect("static pattern");
    if let Some(c) = leading.captures(&lower) {
        return letter(&c[1]);
    }
    let said = normalize(answer);
    let (a, b) = (normalize(option_a), normalize(option_b));
    match (said.contains(&a), said.contains(&b)) {
        (true, false) => Some(ChoiceLabel::A),
        (false, true) => Some(ChoiceLabel::B),
        (true, true) if a.len() != b.len() => {
            // One option embeds the other; the longer, more specific one was said.
            Some(if a.len() > b.len() { ChoiceLabel::A } else { ChoiceLabel::B })
        }
        _ => None,
    }
}

fn first_yes_no(answer: &str) -> Option<bool> {
    let re = Regex::new(r"(?i)\b(yes|no)\b").expect("static pattern");
    re.captures(answer).map(|c| c[1].eq_ignore_ascii_case("yes"))
}

/// Cast members named in the answer, as word-bounded case-insensitive tokens.
pub fn named_cast_members<'a>(answer: &str, cast: &'a [String]) -> Vec<&'a str> {
    cast.iter().filter(|n| has_word(answer, n)).map(String::as_str).collect()
}

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Unigram F1 between two texts over lowercase alphanumeric tokens.
pub fn unigram_f1(prediction: &str, reference: &str) -> f64 {
    let pred = tokens(prediction);
    let gold = tokens(reference);
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Conversation question grading by gold kind.
pub fn grade_fantom(question_id: &str, answer: &str, gold: &GoldAnswer) -> GradedOutcome {
    match gold {
        GoldAnswer::Choice {
            label,
            option_a,
            option_b,
        } => match chosen_label(answer, option_a, option_b) {
            Some(chosen) => outcome(question_id, "choice", answer, chosen == *label),
            None => ungradable(question_id, "choice", answer, "no option letter or option text"),
        },
        GoldAnswer::YesNo { yes } => match first_yes_no(answer) {
            Some(said) => outcome(question_id, "yes_no", answer, said == *yes),
            None => ungradable(question_id, "yes_no", answer, "no yes/no token"),
        },
        GoldAnswer::NameSet { names, cast } => {
            let named = named_cast_members(answer, cast);
            let exact = named.len() == names.len() && names.iter().all(|n| named.iter().any(|m| m.eq_ignore_ascii_case(n)));
            outcome(question_id, "name_set", answer, exact)
        }
        GoldAnswer::FreeTextPair { gold_text, wrong_text } => {
            let to_gold = unigram_f1(answer, gold_text);
            let to_wrong = unigram_f1(answer, wrong_text);
            let mut graded = outcome(question_id, "comparative_unigram_f1", answer, to_gold > to_wrong);
            graded.notes = Some(format!("f1_gold={to_gold:.3} f1_wrong={to_wrong:.3}"));
            graded
        }
        GoldAnswer::ContainerPair { correct, foil, .. } => {
            grade_tomi(question_id, answer, correct, foil.as_deref())
        }
    }
}

/// Grades an answer against the question's gold.
pub fn grade(answer: &str, question: &Question) -> GradedOutcome {
    match &question.gold {
        GoldAnswer::ContainerPair { correct, foil, .. } => {
            grade_tomi(&question.question_id, answer, correct, foil.as_deref())
        }
        gold => grade_fantom(&question.question_id, answer, gold),
    }
}

/// Fraction of gold units whose matched prediction names exactly the gold
/// perceivers, ignoring name case and order.
pub fn perception_accuracy(predicted: &[PerceptionEntry], gold: &AnnotatedContext) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let texts: Vec<&str> = gold.texts().collect();
    let matched = match_units(&texts, predicted);
    let credited = gold
        .units
        .iter()
        .zip(&matched)
        .filter(|(unit, hit)| {
            hit.is_some_and(|k| unit.perceivers.same_members(&predicted[k].perceivers))
        })
        .count();
    credited as f64 / gold.len() as f64
}

/// Unweighted mean of per-context accuracies.
pub fn dataset_perception_accuracy(per_context: &[f64]) -> Result<f64, MetricError> {
    if per_context.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(per_context.iter().sum::<f64>() / per_context.len() as f64)
}

pub fn tom_accuracy(outcomes: &[GradedOutcome]) -> Result<f64, MetricError> {
    if outcomes.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(outcomes.iter().filter(|o| o.correct).count() as f64 / outcomes.len() as f64)
}

/// One question set's outcomes, keyed by question type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuestionSet {
    pub set_id: String,
    pub outcomes: Vec<(QuestionType, bool)>,
}

/// Fraction of question sets with every question answered correctly.
pub fn set_all_score(sets: &[QuestionSet]) -> Result<f64, MetricError> {
    if sets.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut all_right = 0usize;
    for set in sets {
        let mut seen: BTreeMap<QuestionType, bool> = BTreeMap::new();
        for (qtype, correct) in &set.outcomes {
            let slot = seen.entry(*qtype).or_insert(true);
            *slot &= *correct;
        }
        if QuestionType::FANTOM_SET.iter().any(|t| !seen.contains_key(t)) {
            return Err(MetricError::IncompleteSet(set.set_id.clone()));
        }
        if seen.values().all(|c| *c) {
            all_right += 1;
        }
    }
    Ok(all_right as f64 / sets.len() as f64)
}

/// Product-moment correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::DegenerateInput(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(MetricError::DegenerateInput("fewer than two points".to_string()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::DegenerateInput("zero variance".to_string()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tomi_grading_needs_correct_and_no_foil() {
        let g = |a: &str| grade_tomi("q", a, "cupboard", Some("pantry")).correct;
        assert!(g("Lucas will look for the boots in the cupboard in the cellar."));
        assert!(!g("in the pantry"));
        assert!(!g("maybe the cupboard or the pantry"));
        assert!(!g("in the cupboards"));
    }

    #[test]
    fn fantom_decision_tokens() {
        let choice = GoldAnswer::Choice {
            label: ChoiceLabel::A,
            option_a: "Javier believes the dog is a poodle.".into(),
            option_b: "Javier does not know the breed.".into(),
        };
        assert!(grade_fantom("q", "(a)", &choice).correct);
        assert!(grade_fantom("q", "a) the first", &choice).correct);
        assert!(!grade_fantom("q", "(b)", &choice).correct);
        assert!(grade_fantom("q", "hmm", &choice).ungradable);
        assert!(grade_fantom("q", "Yes, Javier knows.", &GoldAnswer::YesNo { yes: true }).correct);
        assert!(!grade_fantom("q", "Not sure... no.", &GoldAnswer::YesNo { yes: true }).correct);
    }

    #[test]
    fn name_sets_ignore_non_cast_words() {
        let gold = GoldAnswer::NameSet {
            names: vec!["Sara".into(), "Javier".into()],
            cast: vec!["Gianna".into(), "Sara".into(), "Javier".into()],
        };
        assert!(grade_fantom("q", "Only Javier and Sara.", &gold).correct);
        assert!(!grade_fantom("q", "Sara, Javier, Gianna", &gold).correct);
        let none = GoldAnswer::NameSet {
            names: vec![],
            cast: vec!["Gianna".into()],
        };
        assert!(grade_fantom("q", "None of them.", &none).correct);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(dataset_perception_accuracy(&[1.0, 0.5]).unwrap(), 0.75);
        assert_eq!(dataset_perception_accuracy(&[]), Err(MetricError::EmptyInput));
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&[1.0, 1.0], &[2.0, 3.0]), Err(MetricError::DegenerateInput(_))));
    }
}
