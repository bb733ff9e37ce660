//! Parsing and repair of structured model replies.
//!
//! Models wrap JSON in prose or code fences; the extractor finds the first
//! balanced object and validates it against the evidence schema. Strings are
//! truncated to the field cap and confidence is clamped to [0, 1]. Anything
//! still unusable is a schema error the caller may repair with one re-prompt.

use serde_json::Value;

use super::{
    clamp01, truncate_field, ConsolidatedEvidence, ReasonerError, SelfEvidence, FIELD_CAP,
};

/// Extracts the first balanced JSON object from free-form text, ignoring
/// code fences. Braces inside string literals are skipped.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let start = bytes.iter().position(|&b| b == b'{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_value(text: &str) -> Result<Value, ReasonerError> {
    let object = extract_json_object(text)
        .ok_or_else(|| ReasonerError::Schema("no JSON object found in reply".into()))?;
    serde_json::from_str(object).map_err(|e| ReasonerError::Schema(e.to_string()))
}

fn required_str(value: &Value, key: &str) -> Result<String, ReasonerError> {
    value
        .get(key)
        .and_then(Value::as_str)
        .map(|s| s.to_string())
        .ok_or_else(|| ReasonerError::Schema(format!("missing or non-string field {key:?}")))
}

/// Parses a self-state verification reply.
pub fn parse_self_evidence(text: &str) -> Result<SelfEvidence, ReasonerError> {
    let value = parse_value(text)?;
    let is_abnormal = value
        .get("is_abnormal")
        .and_then(Value::as_bool)
        .ok_or_else(|| ReasonerError::Schema("missing or non-boolean is_abnormal".into()))?;
    Ok(SelfEvidence {
        span_id: required_str(&value, "span_id")?,
        service: required_str(&value, "service_name")?,
        is_abnormal,
        key_symptoms: truncate_field(&required_str(&value, "key_symptoms")?, FIELD_CAP),
        hypothesis: truncate_field(&required_str(&value, "hypothesis")?, FIELD_CAP),
    })
}

/// Parses an evidence consolidation reply.
pub fn parse_consolidated_evidence(text: &str) -> Result<ConsolidatedEvidence, ReasonerError> {
    let value = parse_value(text)?;
    let confidence = value
        .get("confidence")
        .and_then(Value::as_f64)
        .ok_or_else(|| ReasonerError::Schema("missing or non-numeric confidence".into()))?;
    Ok(ConsolidatedEvidence {
        span_id: required_str(&value, "span_id")?,
        service: required_str(&value, "service_name")?,
        local_root_cause: required_str(&value, "local_root_cause")?,
        reason: truncate_field(&required_str(&value, "reason")?, FIELD_CAP),
        confidence: clamp01(confidence),
    })
}
