//! The clarifier output contract and its format flag.
//!
//! A clarifier answers with exactly one JSON object:
//! `{"type": "DG"|"RD"|"SC"|"CG"|"NONE", "to_agent": ..., "question": ...}`.
//! `NONE` carries a null addressee and an empty question; every other type
//! carries a non-empty question within the token cap.

use serde_json::{json, Value};

use crate::types::{whitespace_tokens, Action, EdgeState, ErrorType, Side};

pub const DEFAULT_TOKEN_CAP: u32 = 40;

const FIELDS: [&str; 3] = ["type", "to_agent", "question"];

/// Returns the format flag: `true` iff `text` satisfies the output contract.
pub fn validate_schema(text: &str, cap: u32) -> bool {
    let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(text) else {
        return false;
    };
    if obj.len() != FIELDS.len() || !FIELDS.iter().all(|f| obj.contains_key(*f)) {
        return false;
    }
    let Some(kind) = obj["type"].as_str().and_then(ErrorType::from_tag) else {
        return false;
    };
    let Some(question) = obj["question"].as_str() else {
        return false;
    };
    match kind {
        ErrorType::None => obj["to_agent"].is_null() && question.is_empty(),
        _ => {
            let addressed = obj["to_agent"].as_str().is_some_and(|s| !s.trim().is_empty());
            let tokens = whitespace_tokens(question);
            addressed && tokens > 0 && tokens <= cap
        }
    }
}

/// Renders an action in the clarifier output contract. The addressee is
/// written as its role on the edge (`"sender"` / `"receiver"`).
pub fn action_to_json(action: &Action, state: &EdgeState) -> String {
    let value = if action.gate {
        let to_agent = action
            .addressee
            .as_ref()
            .and_then(|a| state.side_of(a))
            .map(side_label)
            .unwrap_or("unknown");
        let question = action.question.as_ref().map(|q| q.rendered.as_str()).unwrap_or("");
        json!({ "type": action.error_type.tag(), "to_agent": to_agent, "question": question })
    } else {
        json!({ "type": "NONE", "to_agent": null, "question": "" })
    };
    value.to_string()
}

pub fn side_label(side: Side) -> &'static str {
    match side {
        Side::Sender => "sender",
        Side::Receiver => "receiver",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accepts_well_formed_ask() {
        let t = r#"{"type":"DG","to_agent":"sender","question":"Which unit is n in?"}"#;
        assert!(validate_schema(t, 40));
    }

    #[test]
    fn accepts_none_contract() {
        assert!(validate_schema(r#"{"type":"NONE","to_agent":null,"question":""}"#, 40));
    }

    #[test]
    fn rejects_missing_fields() {
        assert!(!validate_schema(r#"{"type":"DG"}"#, 40));
    }

    #[test]
    fn rejects_contract_violations() {
        let cases = [
            r#"{"type":"NONE","to_agent":"sender","question":""}"#,
            r#"{"type":"NONE","to_agent":null,"question":"why?"}"#,
            r#"{"type":"DG","to_agent":"sender","question":""}"#,
            r#"{"type":"DG","to_agent":null,"question":"what?"}"#,
            r#"{"type":"XX","to_agent":"sender","question":"what?"}"#,
            r#"{"type":"DG","to_agent":"sender","question":"what?","extra":1}"#,
            r#"[{"type":"NONE","to_agent":null,"question":""}]"#,
            r#"{"type":"NONE","to_agent":null,"question":""} trailing"#,
            "plain prose, no json",
        ];
        for c in cases {
            assert!(!validate_schema(c, 40), "{c}");
        }
    }

    #[test]
    fn enforces_token_cap() {
        let q = vec!["w"; 41].join(" ");
        let t = json!({"type":"SC","to_agent":"receiver","question":q}).to_string();
        assert!(!validate_schema(&t, 40));
        assert!(validate_schema(&t, 41));
    }

    proptest! {
        #[test]
        fn total_on_arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let text = String::from_utf8_lossy(&bytes);
            let _ = validate_schema(&text, 40);
        }

        #[test]
        fn total_on_jsonish_strings(s in r#"[\{\}\[\]":,a-zA-Z0-9 ]{0,80}"#) {
            let _ = validate_schema(&s, 40);
        }
    }
}
