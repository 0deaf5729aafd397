//! Tolerant readers for LLM answers.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ResponseParseError;
use crate::intent::Intent;
use crate::literal::{find_first_list, find_first_object};

use super::InsightSet;

type ParseResult<T> = Result<T, ResponseParseError>;

fn find_object_with(raw: &str, key: &str) -> Option<serde_json::Map<String, Value>> {
    raw.match_indices('{').find_map(|(idx, _)| {
        crate::literal::parse_literal(&raw[idx..])
            .ok()
            .and_then(|(v, _)| match v {
                Value::Object(m) if m.contains_key(key) => Some(m),
                _ => None,
            })
    })
}

fn intents_from(values: &[Value], raw: &str) -> ParseResult<Vec<Intent>> {
    values
        .iter()
        .map(|v| {
            let label = v
                .as_str()
                .ok_or_else(|| ResponseParseError::new(format!("intent entry {v} is not a string"), raw))?;
            Intent::from_label(label)
                .ok_or_else(|| ResponseParseError::new(format!("unknown intent {label:?}"), raw))
        })
        .collect()
}

/// Reads `{"predicted_intent": [...]}` (or a bare list) from free text and
/// checks it has exactly `expected_count` known intents.
pub fn parse_intent_response(raw: &str, expected_count: usize) -> ParseResult<Vec<Intent>> {
    if expected_count == 0 {
        return Err(ResponseParseError::new("expected at least one intent", raw));
    }
    let list = match find_object_with(raw, "predicted_intent") {
        Some(obj) => match &obj["predicted_intent"] {
            Value::Array(items) => items.clone(),
            Value::String(s) => vec![Value::String(s.clone())],
            other => {
                return Err(ResponseParseError::new(
                    format!("predicted_intent is not a list: {other}"),
                    raw,
                ))
            }
        },
        None => match find_first_list(raw) {
            Some(Value::Array(items)) => items,
            _ => return Err(ResponseParseError::new("no JSON answer found", raw)),
        },
    };
    let intents = intents_from(&list, raw)?;
    if intents.len() != expected_count {
        return Err(ResponseParseError::new(
            format!("expected {expected_count} intents, got {}", intents.len()),
            raw,
        ));
    }
    Ok(intents)
}

/// Home and work POI names as answered; `None` when the model declined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorAnswer {
    pub home: Option<String>,
    pub work: Option<String>,
    pub reason: String,
}

fn place(v: Option<&Value>) -> Option<String> {
    let s = v?.as_str()?.trim();
    let lowered = s.to_ascii_lowercase();
    if s.is_empty() || matches!(lowered.as_str(), "none" | "null" | "unknown" | "n/a") {
        None
    } else {
        Some(s.to_string())
    }
}

pub fn parse_anchor_response(raw: &str) -> ParseResult<AnchorAnswer> {
    let obj = find_object_with(raw, "home")
        .or_else(|| find_object_with(raw, "work"))
        .ok_or_else(|| ResponseParseError::new("no home/work JSON object found", raw))?;
    let reason = obj
        .get("reason")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    Ok(AnchorAnswer {
        home: place(obj.get("home")),
        work: place(obj.get("work")),
        reason,
    })
}

fn feature_list(v: &Value) -> Vec<String> {
    match v {
        Value::Array(items) => items
            .iter()
            .filter_map(|f| f.as_str().map(|s| s.trim().to_string()))
            .filter(|s| !s.is_empty())
            .collect(),
        Value::String(s) => vec![s.clone()],
        _ => Vec::new(),
    }
}

/// Reads the feature-extraction answer. Accepts a list of
/// `{"intent", "features"}` entries under "features", or a mapping from
/// intent name to feature list.
pub fn parse_insight_response(raw: &str, source_fingerprint: &str) -> ParseResult<InsightSet> {
    let obj = find_object_with(raw, "features")
        .or_else(|| match find_first_object(raw) {
            Some(Value::Object(m)) => Some(m),
            _ => None,
        })
        .ok_or_else(|| ResponseParseError::new("no features JSON found", raw))?;
    let mut per_intent: [Vec<String>; crate::intent::NUM_INTENTS] = Default::default();
    let mut absorb = |name: &str, value: &Value| {
        if let Some(intent) = Intent::from_label(name) {
            per_intent[intent.index()].extend(feature_list(value));
        }
    };
    match obj.get("features") {
        Some(Value::Array(entries)) => {
            for e in entries {
                if let (Some(name), Some(feats)) = (e.get("intent").and_then(Value::as_str), e.get("features")) {
                    absorb(name, feats);
                }
            }
        }
        Some(Value::Object(map)) => {
            for (name, feats) in map {
                absorb(name, feats);
            }
        }
        _ => {
            for (name, feats) in &obj {
                absorb(name, feats);
            }
        }
    }
    let take = |i: Intent| per_intent[i.index()].clone();
    let set = InsightSet {
        at_home: take(Intent::AtHome),
        working: take(Intent::Working),
        running_errands: take(Intent::RunningErrands),
        source_fingerprint: source_fingerprint.to_string(),
    };
    set.validate()
        .map_err(|e| ResponseParseError::new(e.to_string(), raw))?;
    for intent in super::INSIGHT_INTENTS {
        let n = set.features(intent).len();
        if !(6..=8).contains(&n) {
            log::warn!("insight set has {n} features for {intent}, outside 6-8");
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intent_plain_and_fenced() {
        let got = parse_intent_response(r#"{"predicted_intent":["Working","At Home"]}"#, 2).unwrap();
        assert_eq!(got, vec![Intent::Working, Intent::AtHome]);
        let chatter = "Sure! Here is my answer:\n```json\n{\n\"predicted_intent\": [\"working\", \"at home\"],\n}\n```\nHope it helps.";
        assert_eq!(parse_intent_response(chatter, 2).unwrap(), got);
    }

    #[test]
    fn intent_errors_keep_raw_text() {
        let e = parse_intent_response(r#"{"predicted_intent":["Working"]}"#, 2).unwrap_err();
        assert!(e.message.contains("expected 2"));
        assert!(e.raw.contains("Working"));
        assert!(parse_intent_response("no idea", 1).is_err());
        assert!(parse_intent_response(r#"{"predicted_intent":["Sleeping"]}"#, 1).is_err());
        assert!(parse_intent_response(r#"{"predicted_intent":["At Home"]}"#, 0).is_err());
    }

    #[test]
    fn intent_spelling_variants() {
        let raw = r#"{{"predicted_intent": ["Running errands", "Leisure and entertainment", "EATING OUT", "Shopping"]}}"#;
        assert_eq!(
            parse_intent_response(raw, 4).unwrap(),
            vec![
                Intent::RunningErrands,
                Intent::LeisureAndEntertainment,
                Intent::EatingOut,
                Intent::Shopping
            ]
        );
        assert_eq!(
            parse_intent_response("['Working','Working','At Home']", 3).unwrap(),
            vec![Intent::Working, Intent::Working, Intent::AtHome]
        );
    }

    #[test]
    fn anchors_with_missing_comma() {
        let raw = "{\n    \"home\": \"Garden Homes 1\",\n    \"work\": \"Tech Park 2\"\n    \"reason\": \"night stays\"\n}";
        let a = parse_anchor_response(raw).unwrap();
        assert_eq!(a.home.as_deref(), Some("Garden Homes 1"));
        assert_eq!(a.work.as_deref(), Some("Tech Park 2"));
        assert_eq!(a.reason, "night stays");
        let none = parse_anchor_response(r#"{"home": "Apartments 1", "work": "None"}"#).unwrap();
        assert_eq!(none.work, None);
        assert!(parse_anchor_response("cannot tell").is_err());
    }

    #[test]
    fn insights_both_shapes() {
        let list = r#"{"features": [{"intent": "At Home", "features": ["a", "b"]},
            {"intent": "Working", "features": ["c"]}, {"intent": "Running errands", "features": ["d"]}]}"#;
        let s = parse_insight_response(list, "fp").unwrap();
        assert_eq!(s.at_home, vec!["a", "b"]);
        assert_eq!(s.running_errands, vec!["d"]);
        let map = r#"{"features": {"At Home": ["a"], "Working": ["c"], "Running Errands": ["d"]}}"#;
        assert_eq!(parse_insight_response(map, "fp").unwrap().working, vec!["c"]);
        let missing = r#"{"features": [{"intent": "At Home", "features": ["a"]}]}"#;
        assert!(parse_insight_response(missing, "fp").is_err());
    }
}
