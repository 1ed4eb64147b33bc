use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Candidate, CandidatePayload};
use crate::error::{HaraError, Result};
use crate::model::{Function, Hazard, Malfunction, SafetyGoal, Stage};
use crate::risk::RiskRating;

/// An element of a backend response that did not match the stage schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropped {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedCandidates {
    pub items: Vec<Candidate>,
    pub dropped: Vec<Dropped>,
}

/// Index of the bracket closing the one at `open`, skipping brackets inside
/// strings.
fn matching_close(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'[' | b'{' => depth += 1,
            b']' | b'}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Strips trailing commas and appends missing closers. Purely syntactic.
fn repair(fragment: &str) -> String {
    let mut out = String::with_capacity(fragment.len() + 8);
    let mut stack = Vec::new();
    let mut in_str = false;
    let mut escaped = false;
    for ch in fragment.chars() {
        if in_str {
            out.push(ch);
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => {
                in_str = true;
                out.push(ch);
            }
            '[' => {
                stack.push(']');
                out.push(ch);
            }
            '{' => {
                stack.push('}');
                out.push(ch);
            }
            ']' | '}' => {
                strip_trailing_comma(&mut out);
                if stack.last() == Some(&ch) {
                    stack.pop();
                }
                out.push(ch);
                if stack.is_empty() {
                    return out;
                }
            }
            _ => out.push(ch),
        }
    }
    if in_str {
        out.push('"');
    }
    while let Some(close) = stack.pop() {
        strip_trailing_comma(&mut out);
        out.push(close);
    }
    out
}

fn strip_trailing_comma(out: &mut String) {
    let trimmed = out.trim_end().len();
    if out[..trimmed].ends_with(',') {
        out.truncate(trimmed - 1);
    }
}

/// The first JSON array recoverable from free text.
fn first_array(raw: &str) -> Option<Vec<Value>> {
    let bytes = raw.as_bytes();
    let mut start = 0;
    while let Some(off) = raw[start..].find('[') {
        let open = start + off;
        if let Some(close) = matching_close(bytes, open) {
            if let Ok(Value::Array(items)) = serde_json::from_str(&raw[open..=close]) {
                return Some(items);
            }
        }
        if let Ok(Value::Array(items)) = serde_json::from_str(&repair(&raw[open..])) {
            return Some(items);
        }
        start = open + 1;
    }
    None
}

fn require_text(v: &Value, field: &str) -> std::result::Result<(), String> {
    match v.get(field) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(()),
        Some(Value::String(_)) => Err(format!("field `{field}` is empty")),
        Some(_) => Err(format!("field `{field}` is not a string")),
        None => Err(format!("missing field `{field}`")),
    }
}

fn payload_for(stage: Stage, v: Value) -> std::result::Result<CandidatePayload, String> {
    if !v.is_object() {
        return Err("element is not an object".into());
    }
    let decode = |e: serde_json::Error| e.to_string();
    Ok(match stage {
        Stage::FunctionExtraction => {
            require_text(&v, "name")?;
            CandidatePayload::Function(serde_json::from_value::<Function>(v).map_err(decode)?)
        }
        Stage::MalfunctionDerivation => {
            require_text(&v, "function_id")?;
            require_text(&v, "description")?;
            CandidatePayload::Malfunction(serde_json::from_value::<Malfunction>(v).map_err(decode)?)
        }
        Stage::HazardIdentification => {
            require_text(&v, "malfunction_id")?;
            require_text(&v, "scenario")?;
            CandidatePayload::Hazard(serde_json::from_value::<Hazard>(v).map_err(decode)?)
        }
        Stage::RiskAssessment => {
            require_text(&v, "hazard_id")?;
            CandidatePayload::Rating(serde_json::from_value::<RiskRating>(v).map_err(decode)?)
        }
        Stage::SafetyGoals => {
            require_text(&v, "text")?;
            if v.get("asil").is_some_and(|a| !a.is_null()) {
                return Err("`asil` is derived and must not be supplied".into());
            }
            CandidatePayload::SafetyGoal(serde_json::from_value::<SafetyGoal>(v).map_err(decode)?)
        }
        Stage::ItemDefinition | Stage::Complete => return Err(format!("stage {stage} has no candidates")),
    })
}

/// Extracts the first JSON array from a backend response and keeps the
/// elements that match the stage schema. Fails only when no array can be
/// recovered, even after the repair pass.
pub fn parse_candidates(stage: Stage, raw: &str) -> Result<ParsedCandidates> {
    let elements = first_array(raw).ok_or_else(|| {
        let preview: String = raw.chars().take(80).collect();
        HaraError::MalformedResponse(format!("no JSON array found in `{preview}`"))
    })?;
    let mut out = ParsedCandidates::default();
    for (index, v) in elements.into_iter().enumerate() {
        match payload_for(stage, v) {
            Ok(payload) => out.items.push(Candidate { template: format!("prompt/{stage}"), payload }),
            Err(reason) => {
                log::warn!("dropping {stage} candidate #{index}: {reason}");
                out.dropped.push(Dropped { index, reason });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = r#"[
        {"function_id": "F1", "guide_word": "no", "description": "Obstacle not detected"},
        {"function_id": "F1", "guide_word": "unintended", "description": "False Obstacle detected"},
        {"function_id": "F1", "guide_word": "late", "description": "Delay on Obstacle Detection"}
    ]"#;

    #[test]
    fn clean_array() {
        let p = parse_candidates(Stage::MalfunctionDerivation, THREE).unwrap();
        assert_eq!(p.items.len(), 3);
        assert!(p.dropped.is_empty());
    }

    #[test]
    fn prose_wrapped_array() {
        let raw = format!("Here is the result: {THREE}\nLet me know if you need more [detail].");
        let p = parse_candidates(Stage::MalfunctionDerivation, &raw).unwrap();
        assert_eq!(p.items.len(), 3);
    }

    #[test]
    fn invalid_element_is_dropped() {
        let raw = r#"[{"function_id":"F1","guide_word":"no","description":"a"},
                      {"function_id":"F1","guide_word":"late"},
                      {"function_id":"F1","guide_word":"early","description":"b"}]"#;
        let p = parse_candidates(Stage::MalfunctionDerivation, raw).unwrap();
        assert_eq!(p.items.len(), 2);
        assert_eq!(p.dropped.len(), 1);
        assert_eq!(p.dropped[0].index, 1);
        assert!(p.dropped[0].reason.contains("description"));
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(
            parse_candidates(Stage::MalfunctionDerivation, "I cannot help with that."),
            Err(HaraError::MalformedResponse(_))
        ));
        assert!(matches!(parse_candidates(Stage::HazardIdentification, "{\"a\": 1}"), Err(HaraError::MalformedResponse(_))));
    }

    #[test]
    fn repair_pass_fixes_trailing_commas_and_truncation() {
        let raw = r#"Result: [{"function_id":"F1","guide_word":"no","description":"x"},]"#;
        assert_eq!(parse_candidates(Stage::MalfunctionDerivation, raw).unwrap().items.len(), 1);
        let truncated = r#"[{"function_id":"F1","guide_word":"no","description":"x"}, {"function_id":"F1","guide_word":"late","description":"y"}"#;
        assert_eq!(parse_candidates(Stage::MalfunctionDerivation, truncated).unwrap().items.len(), 2);
    }

    #[test]
    fn brackets_inside_strings_are_ignored() {
        let raw = r#"[{"function_id":"F1","guide_word":"no","description":"not [really] closed ]"}]"#;
        let p = parse_candidates(Stage::MalfunctionDerivation, raw).unwrap();
        assert_eq!(p.items.len(), 1);
    }

    #[test]
    fn goal_with_asil_is_dropped() {
        let raw = r#"[{"text":"g","hazard_ids":["H1"],"asil":"D"},{"text":"h","hazard_ids":["H1"]}]"#;
        let p = parse_candidates(Stage::SafetyGoals, raw).unwrap();
        assert_eq!(p.items.len(), 1);
    }
}
