//! Reading perception inference responses.
//!
//! The response is expected to hold a JSON array of single-key objects
//! mapping a unit of the context to the list of its perceivers. Prose around
//! the array is ignored and trailing commas are tolerated. Objects with
//! several keys become several entries, in key order.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseError {
    #[error("no JSON array found in the response")]
    NoArrayFound,
    #[error("entry {index} is malformed: {reason}")]
    MalformedEntry { index: usize, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceptionEntry {
    pub unit: String,
    pub perceivers: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceptionInferenceResult {
    pub entries: Vec<PerceptionEntry>,
    pub raw_response: String,
}

/// End (exclusive) of the bracketed span opening at `start`, skipping
/// brackets inside JSON strings.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'[' | b'{' => depth += 1,
            b']' | b'}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(start + offset + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Drops commas that directly precede `]` or `}` outside strings.
fn strip_trailing_commas(json: &str) -> String {
    let mut out = String::with_capacity(json.len());
    let mut in_string = false;
    let mut escaped = false;
    let chars: Vec<char> = json.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        if c == '"' {
            in_string = true;
        } else if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some(']') | Some('}')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

fn first_array(text: &str) -> Option<Vec<Value>> {
    let mut from = 0;
    while let Some(rel) = text[from..].find('[') {
        let start = from + rel;
        // Every later bracket sits inside this unclosed one.
        let end = balanced_end(text, start)?;
        let span = &text[start..end];
        let parsed = serde_json::from_str::<Value>(span)
            .or_else(|_| serde_json::from_str::<Value>(&strip_trailing_commas(span)));
        match parsed {
            Ok(Value::Array(items)) => return Some(items),
            _ => from = end,
        }
    }
    None
}

pub fn parse_perception_response(text: &str) -> Result<PerceptionInferenceResult, ParseError> {
    let items = first_array(text).ok_or(ParseError::NoArrayFound)?;
    let mut entries = Vec::new();
    for (index, item) in items.into_iter().enumerate() {
        let malformed = |reason: &str| ParseError::MalformedEntry {
            index,
            reason: reason.to_string(),
        };
        let Value::Object(map) = item else {
            return Err(malformed("not an object"));
        };
        if map.is_empty() {
            return Err(malformed("empty object"));
        }
        for (unit, value) in map {
            let Value::Array(names) = value else {
                return Err(malformed(&format!("perceivers of `{unit}` are not a list")));
            };
            let mut perceivers = Vec::with_capacity(names.len());
            for name in names {
                let Value::String(name) = name else {
                    return Err(malformed(&format!("a perceiver of `{unit}` is not a string")));
                };
                let name = name.trim();
                if !name.is_empty() {
                    perceivers.push(name.to_string());
                }
            }
            entries.push(PerceptionEntry { unit, perceivers });
        }
    }
    Ok(PerceptionInferenceResult {
        entries,
        raw_response: text.to_string(),
    })
}
