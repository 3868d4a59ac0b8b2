//! Turns free-form model output into an [`AgentAnalysis`].
//!
//! Parsing is total. The structured path reads the first JSON object carrying
//! a `verdict` key; otherwise verdict and confidence are pulled out of the
//! prose. Negative tokens are matched before `compliant` so that
//! "non-compliant" is never read as a clearance. Anything else abstains.

use alloc::format;
use alloc::string::{String, ToString};

use serde_json::{Map, Value};

use crate::domain::{AgentAnalysis, AgentRole, AgentVerdict};

/// Used when a verdict is found but no confidence accompanies it.
pub const DEFAULT_CONFIDENCE: f64 = 0.5;

const NEGATIVE_TOKENS: [&str; 5] = ["non-compliant", "non_compliant", "noncompliant", "non compliant", "not compliant"];
const POSITIVE_TOKEN: &str = "compliant";

pub fn parse_analysis(raw: &str, role: AgentRole) -> AgentAnalysis {
    let lowered = raw.to_ascii_lowercase();
    let mentions_negative = NEGATIVE_TOKENS.iter().any(|t| lowered.contains(t));

    if let Some(obj) = first_verdict_object(raw) {
        if let Some(verdict) = obj.get("verdict").and_then(Value::as_str).and_then(verdict_from_label) {
            if verdict == AgentVerdict::Compliant && mentions_negative {
                return AgentAnalysis::abstain(
                    role,
                    format!("conflicting verdict signals (COMPLIANT with a non-compliance mention): {}", raw.trim()),
                );
            }
            let confidence = obj.get("confidence").and_then(number_like).unwrap_or(DEFAULT_CONFIDENCE);
            let rationale = match obj.get("rationale") {
                Some(Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
                None => String::new(),
            };
            return AgentAnalysis::new(role, verdict, confidence, rationale);
        }
    }

    let verdict = if mentions_negative {
        AgentVerdict::NonCompliant
    } else if lowered.contains(POSITIVE_TOKEN) {
        AgentVerdict::Compliant
    } else {
        return AgentAnalysis::abstain(role, format!("no verdict found in response: {}", raw.trim()));
    };
    let confidence = confidence_after_token(&lowered).unwrap_or(DEFAULT_CONFIDENCE);
    AgentAnalysis::new(role, verdict, confidence, raw.trim())
}

/// Accepts the canonical labels plus common spellings (`NON-COMPLIANT`, lower case).
pub fn verdict_from_label(label: &str) -> Option<AgentVerdict> {
    let norm: String = label
        .trim()
        .chars()
        .filter_map(|c| match c {
            '-' | ' ' | '_' => None,
            c => Some(c.to_ascii_uppercase()),
        })
        .collect();
    match norm.as_str() {
        "COMPLIANT" => Some(AgentVerdict::Compliant),
        "NONCOMPLIANT" | "NOTCOMPLIANT" => Some(AgentVerdict::NonCompliant),
        _ => None,
    }
}

fn first_verdict_object(raw: &str) -> Option<Map<String, Value>> {
    raw.match_indices('{').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(obj))) if obj.contains_key("verdict") => Some(obj),
            _ => None,
        }
    })
}

fn number_like(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().trim_end_matches('%').trim().parse::<f64>().ok().map(|x| {
            if s.trim().ends_with('%') {
                x / 100.0
            } else {
                x
            }
        }),
        _ => None,
    }
}

/// First number in `[0, 1]` after any occurrence of "confidence"; `80%` counts as 0.8.
fn confidence_after_token(lowered: &str) -> Option<f64> {
    lowered
        .match_indices("confidence")
        .find_map(|(i, token)| numbers(&lowered[i + token.len()..]).find(|x| (0.0..=1.0).contains(x)))
}

fn numbers(text: &str) -> impl Iterator<Item = f64> + '_ {
    let bytes = text.as_bytes();
    let mut pos = 0;
    core::iter::from_fn(move || {
        while pos < bytes.len() {
            let start = pos;
            let starts_number = bytes[pos].is_ascii_digit()
                || (bytes[pos] == b'.' && bytes.get(pos + 1).is_some_and(u8::is_ascii_digit));
            if !starts_number {
                pos += 1;
                continue;
            }
            let mut seen_dot = false;
            while pos < bytes.len() && (bytes[pos].is_ascii_digit() || (bytes[pos] == b'.' && !seen_dot)) {
                seen_dot |= bytes[pos] == b'.';
                pos += 1;
            }
            let literal = text[start..pos].trim_end_matches('.');
            if let Ok(mut value) = literal.parse::<f64>() {
                if bytes.get(pos) == Some(&b'%') {
                    value /= 100.0;
                }
                return Some(value);
            }
        }
        None
    })
}
