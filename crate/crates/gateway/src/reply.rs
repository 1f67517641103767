use agentask_core::schema::{action_to_json, validate_schema, DEFAULT_TOKEN_CAP};
use agentask_core::types::{Action, AgentId, EdgeState, ErrorType, QuestionSpec, Side};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq)]
pub struct ClarifierReply {
    pub raw: String,
    /// Present iff `format_flag`.
    pub parsed: Option<Action>,
    pub format_flag: bool,
}

fn resolve(to_agent: &str, state: &EdgeState) -> Option<AgentId> {
    match to_agent {
        "sender" => Some(state.addressee(Side::Sender).clone()),
        "receiver" => Some(state.addressee(Side::Receiver).clone()),
        id => state.side_of(&AgentId::new(id)).map(|s| state.addressee(s).clone()),
    }
}

/// Validates a clarifier output against the schema and maps it onto an action at `state`.
///
/// `to_agent` may name a side (`sender`/`receiver`) or an endpoint id. Any
/// other addressee makes the reply unusable and clears the format flag.
pub fn parse_clarifier_reply(text: &str, state: &EdgeState) -> ClarifierReply {
    let unusable = || ClarifierReply { raw: text.to_string(), parsed: None, format_flag: false };
    if !validate_schema(text, DEFAULT_TOKEN_CAP) {
        return unusable();
    }
    let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(text) else {
        return unusable();
    };
    let kind = obj.get("type").and_then(Value::as_str).and_then(ErrorType::from_tag);
    let action = match kind {
        Some(ErrorType::None) => Some(Action::none()),
        Some(k) => {
            let addressee = obj.get("to_agent").and_then(Value::as_str).and_then(|a| resolve(a, state));
            let question = obj.get("question").and_then(Value::as_str).map(QuestionSpec::freeform);
            addressee.zip(question).map(|(a, q)| Action::ask(k, a, q))
        }
        None => None,
    };
    match action {
        Some(a) => ClarifierReply { raw: text.to_string(), parsed: Some(a), format_flag: true },
        None => unusable(),
    }
}

/// JSON a well-formed clarifier would emit for `action`.
pub fn render_reply(action: &Action, state: &EdgeState) -> String {
    action_to_json(action, state)
}
