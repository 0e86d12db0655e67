//! Pulling candidates out of free-form generator responses.

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A proposed feature as returned by the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCandidate {
    pub name: Option<String>,
    pub dsl: String,
    pub rationale: Option<String>,
}

/// Contents of the first fenced code block, if any.
pub fn first_fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    // Skip the info string (e.g. `json`) up to the end of the line.
    let body_start = after.find('\n').map(|i| i + 1)?;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(body[..end].trim_end_matches(['\n', '\r']))
}

/// The first JSON array that parses, scanning from each `[`.
fn first_array(text: &str) -> Option<Vec<Value>> {
    text.match_indices('[').find_map(|(i, _)| {
        let mut de = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        match de.next() {
            Some(Ok(Value::Array(items))) => Some(items),
            _ => None,
        }
    })
}

fn item(v: &Value) -> Option<RawCandidate> {
    match v {
        Value::String(s) => Some(RawCandidate {
            name: None,
            dsl: s.clone(),
            rationale: None,
        }),
        Value::Object(m) => {
            let text = |k: &str| m.get(k).and_then(Value::as_str).map(str::to_string);
            Some(RawCandidate {
                name: text("name"),
                dsl: text("dsl")?,
                rationale: text("rationale"),
            })
        }
        _ => None,
    }
}

/// Extracts up to `limit` candidates: the first fenced block if it holds a
/// JSON array, else the first parseable array anywhere in the text. The
/// error is a diagnostic suitable for a repair prompt.
pub fn extract_candidates(text: &str, limit: usize) -> Result<Vec<RawCandidate>, String> {
    let array = match first_fenced_block(text).map(serde_json::from_str::<Value>) {
        Some(Ok(Value::Array(items))) => items,
        fenced => match first_array(text) {
            Some(items) => items,
            None => {
                return Err(match fenced {
                    Some(Err(e)) => format!("fenced block is not valid JSON: {e}"),
                    Some(Ok(_)) => "fenced block is JSON but not an array".into(),
                    None => "response contains no JSON array".into(),
                })
            }
        },
    };
    let mut out = Vec::new();
    for (i, v) in array.iter().enumerate() {
        match item(v) {
            Some(c) => out.push(c),
            None => return Err(format!("array item {i} has no string `dsl`")),
        }
    }
    out.truncate(limit);
    Ok(out)
}

/// The expression in a repair response: the first fenced block, else the
/// first non-empty line. A JSON string or `{dsl}` object is unwrapped.
pub fn extract_expression(text: &str) -> String {
    let raw = first_fenced_block(text)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .or_else(|| text.lines().map(str::trim).find(|l| !l.is_empty()))
        .unwrap_or("")
        .to_string();
    match serde_json::from_str::<Value>(&raw) {
        Ok(v @ (Value::String(_) | Value::Object(_))) => item(&v).map(|c| c.dsl).unwrap_or(raw),
        _ => raw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prose_and_fence() {
        let t = "Sure! Some ideas:\n```json\n[{\"name\": \"h\", \"dsl\": \"hhi(mcc)\", \"rationale\": \"r\"}, \"span_days()\"]\n```\nBye [1]";
        let c = extract_candidates(t, 10).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].dsl, "hhi(mcc)");
        assert_eq!(c[0].name.as_deref(), Some("h"));
        assert_eq!(c[1].dsl, "span_days()");
    }

    #[test]
    fn bare_array_and_limit() {
        let t = "answer: [\"count()\", \"hhi(mcc)\", \"span_days()\"] done";
        assert_eq!(extract_candidates(t, 2).unwrap().len(), 2);
    }

    #[test]
    fn skips_unparseable_brackets() {
        let t = "use count(window=[bad] then [\"count()\"]";
        assert_eq!(extract_candidates(t, 5).unwrap()[0].dsl, "count()");
    }

    #[test]
    fn malformed_json_is_a_diagnostic() {
        let e = extract_candidates("```json\n[{\"dsl\": \"count()\"\n```", 5).unwrap_err();
        assert!(e.contains("not valid JSON"), "{e}");
        assert!(extract_candidates("no arrays here", 5).is_err());
        assert!(extract_candidates("[{\"name\": 1}]", 5).is_err());
    }

    #[test]
    fn repair_expression_forms() {
        assert_eq!(extract_expression("```\ncount()\n```"), "count()");
        assert_eq!(extract_expression("\n  hhi(mcc)\nmore"), "hhi(mcc)");
        assert_eq!(extract_expression("```json\n{\"dsl\": \"span_days()\"}\n```"), "span_days()");
        assert_eq!(extract_expression("```\n\"count()\"\n```"), "count()");
    }
}
