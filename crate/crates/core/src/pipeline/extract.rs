//! Perspective-context extraction by string matching.

use super::parse::{PerceptionEntry, PerceptionInferenceResult};
use super::PerspectiveContext;
use crate::world::AnnotatedContext;

/// Case-folds, collapses whitespace runs to one space and strips one
/// trailing period. A period after another period or a space is kept, so
/// ellipses survive and normalizing twice changes nothing.
pub fn normalize(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    match collapsed.strip_suffix('.') {
        Some(stripped) if stripped.ends_with(|c: char| c != '.' && c != ' ') => stripped.to_string(),
        _ => collapsed,
    }
}

/// For every unit, the index of the entry it matched.
///
/// Exact normalized equality is tried first, consuming entries in order.
/// Units still unmatched then take the one remaining entry whose normalized
/// key contains the unit or is contained in it; two or more such entries
/// leave the unit unmatched.
pub fn match_units<S: AsRef<str>>(units: &[S], entries: &[PerceptionEntry]) -> Vec<Option<usize>> {
    let unit_norms: Vec<String> = units.iter().map(|u| normalize(u.as_ref())).collect();
    let key_norms: Vec<String> = entries.iter().map(|e| normalize(&e.unit)).collect();
    let mut used = vec![false; entries.len()];
    let mut matched = vec![None; units.len()];

    for (u, norm) in unit_norms.iter().enumerate() {
        let fresh = (0..entries.len()).find(|&k| !used[k] && key_norms[k] == *norm);
        let any = || (0..entries.len()).find(|&k| key_norms[k] == *norm);
        if let Some(k) = fresh.or_else(any) {
            used[k] = true;
            matched[u] = Some(k);
        }
    }

    for (u, norm) in unit_norms.iter().enumerate() {
        if matched[u].is_some() || norm.is_empty() {
            continue;
        }
        let candidates: Vec<usize> = (0..entries.len())
            .filter(|&k| !used[k] && !key_norms[k].is_empty())
            .filter(|&k| key_norms[k].contains(norm.as_str()) || norm.contains(key_norms[k].as_str()))
            .collect();
        if let [k] = candidates[..] {
            used[k] = true;
            matched[u] = Some(k);
        }
    }
    matched
}

/// Keeps the units whose matched entry names every agent of `chain`
/// (case-insensitive). An empty chain keeps every unit.
pub fn extract_perspective_context(
    context: &AnnotatedContext,
    inference: &PerceptionInferenceResult,
    chain: &[String],
) -> PerspectiveContext {
    let texts: Vec<&str> = context.texts().collect();
    let matched = match_units(&texts, &inference.entries);
    let mut perspective = PerspectiveContext {
        target_chain: chain.to_vec(),
        ..PerspectiveContext::default()
    };
    for (text, hit) in texts.iter().zip(&matched) {
        match hit {
            Some(k) => {
                let perceivers = &inference.entries[*k].perceivers;
                let all_perceive = chain
                    .iter()
                    .all(|agent| perceivers.iter().any(|p| p.to_lowercase() == agent.to_lowercase()));
                if all_perceive {
                    perspective.kept_units.push(text.to_string());
                }
            }
            None => perspective.unmatched_units.push(text.to_string()),
        }
    }
    for (k, entry) in inference.entries.iter().enumerate() {
        if !matched.contains(&Some(k)) {
            perspective.dropped_unmatched_keys.push(entry.unit.clone());
        }
    }
    perspective
}

/// The gold annotation as if a model had produced it verbatim.
pub fn gold_inference(context: &AnnotatedContext) -> PerceptionInferenceResult {
    PerceptionInferenceResult {
        entries: context
            .units
            .iter()
            .map(|u| PerceptionEntry {
                unit: u.text.clone(),
                perceivers: u.perceivers.names().to_vec(),
            })
            .collect(),
        raw_response: super::prompts::annotation_to_wire(context),
    }
}
