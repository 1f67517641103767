//! Domain types shared by the simulator, the policy and the trainers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::Exact;

/// Edge-level error taxonomy. `None` means no intervention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorType {
    #[serde(rename = "DG")]
    DataGap,
    #[serde(rename = "RD")]
    ReferentialDrift,
    #[serde(rename = "SC")]
    SignalCorruption,
    #[serde(rename = "CG")]
    CapabilityGap,
    #[serde(rename = "NONE")]
    None,
}

impl ErrorType {
    /// Head order used by the type classifier; `None` is last.
    pub const ALL: [ErrorType; 5] = [
        ErrorType::DataGap,
        ErrorType::ReferentialDrift,
        ErrorType::SignalCorruption,
        ErrorType::CapabilityGap,
        ErrorType::None,
    ];

    pub const FAULTS: [ErrorType; 4] = [
        ErrorType::DataGap,
        ErrorType::ReferentialDrift,
        ErrorType::SignalCorruption,
        ErrorType::CapabilityGap,
    ];

    pub const NONE_INDEX: usize = 4;

    pub fn index(self) -> usize {
        match self {
            ErrorType::DataGap => 0,
            ErrorType::ReferentialDrift => 1,
            ErrorType::SignalCorruption => 2,
            ErrorType::CapabilityGap => 3,
            ErrorType::None => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn tag(self) -> &'static str {
        match self {
            ErrorType::DataGap => "DG",
            ErrorType::ReferentialDrift => "RD",
            ErrorType::SignalCorruption => "SC",
            ErrorType::CapabilityGap => "CG",
            ErrorType::None => "NONE",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.tag() == tag)
    }

    pub fn is_fault(self) -> bool {
        self != ErrorType::None
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        AgentId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Which endpoint of the edge a clarification is addressed to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Sender,
    Receiver,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::Sender, Side::Receiver];

    pub fn index(self) -> usize {
        match self {
            Side::Sender => 0,
            Side::Receiver => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// A compact record of an earlier handoff, as seen by later edges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryEntry {
    pub sender: AgentId,
    pub receiver: AgentId,
    /// Message as delivered (after any clarification).
    pub message: String,
    pub gate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
}

/// Everything the controller may look at when a handoff is about to happen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeState {
    pub query: String,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub message: String,
    pub history: Vec<HistoryEntry>,
    pub step_index: u32,
    pub budget_remaining: u32,
}

impl EdgeState {
    pub fn check(&self, history_bound: usize) -> Result<()> {
        if self.sender == self.receiver {
            return Err(Error::Contract(format!(
                "edge {} has identical sender and receiver {}",
                self.step_index, self.sender
            )));
        }
        if self.history.len() > history_bound {
            return Err(Error::Contract(format!(
                "history length {} exceeds bound {history_bound}",
                self.history.len()
            )));
        }
        Ok(())
    }

    pub fn addressee(&self, side: Side) -> &AgentId {
        match side {
            Side::Sender => &self.sender,
            Side::Receiver => &self.receiver,
        }
    }

    pub fn side_of(&self, agent: &AgentId) -> Option<Side> {
        if *agent == self.sender {
            Some(Side::Sender)
        } else if *agent == self.receiver {
            Some(Side::Receiver)
        } else {
            None
        }
    }
}

/// A schema-constrained clarification question.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionSpec {
    pub template_id: String,
    pub slots: Vec<String>,
    pub rendered: String,
    pub token_count: u32,
}

/// Sentinel template id for free-text questions coming from an external model.
pub const FREEFORM_TEMPLATE: &str = "freeform";

pub fn whitespace_tokens(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

impl QuestionSpec {
    pub fn freeform(text: &str) -> Self {
        QuestionSpec {
            template_id: FREEFORM_TEMPLATE.to_string(),
            slots: Vec::new(),
            rendered: text.to_string(),
            token_count: whitespace_tokens(text),
        }
    }
}

/// Controller decision on one edge: ask gate, addressee and question.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ActionWire", into = "ActionWire")]
pub struct Action {
    pub gate: bool,
    pub addressee: Option<AgentId>,
    pub question: Option<QuestionSpec>,
    pub error_type: ErrorType,
}

impl Action {
    pub fn none() -> Self {
        Action {
            gate: false,
            addressee: None,
            question: None,
            error_type: ErrorType::None,
        }
    }

    pub fn ask(error_type: ErrorType, addressee: AgentId, question: QuestionSpec) -> Self {
        Action {
            gate: true,
            addressee: Some(addressee),
            question: Some(question),
            error_type,
        }
    }

    /// Structural invariants that hold independently of any edge state.
    pub fn check_shape(&self) -> Result<()> {
        if self.gate {
            if !self.error_type.is_fault() {
                return Err(Error::Contract("ask with type NONE".into()));
            }
            if self.addressee.is_none() || self.question.is_none() {
                return Err(Error::Contract("ask without addressee or question".into()));
            }
        } else if self.error_type.is_fault() || self.addressee.is_some() || self.question.is_some() {
            return Err(Error::Contract("gate=0 action must be a bare NONE".into()));
        }
        Ok(())
    }

    /// Full validation against the edge the action was produced for.
    pub fn check_against(&self, state: &EdgeState, token_cap: u32) -> Result<()> {
        self.check_shape()?;
        if let (Some(addr), Some(q)) = (&self.addressee, &self.question) {
            if state.side_of(addr).is_none() {
                return Err(Error::Contract(format!(
                    "addressee {addr} is neither sender {} nor receiver {}",
                    state.sender, state.receiver
                )));
            }
            if q.rendered.trim().is_empty() || q.token_count > token_cap {
                return Err(Error::Contract(format!(
                    "question has {} tokens (cap {token_cap}) or is empty",
                    q.token_count
                )));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionWire {
    gate: bool,
    error_type: ErrorType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    addressee: Option<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    question: Option<QuestionSpec>,
}

impl TryFrom<ActionWire> for Action {
    type Error = String;

    fn try_from(w: ActionWire) -> std::result::Result<Self, String> {
        let action = Action {
            gate: w.gate,
            addressee: w.addressee,
            question: w.question,
            error_type: w.error_type,
        };
        action.check_shape().map_err(|e| e.to_string())?;
        Ok(action)
    }
}

impl From<Action> for ActionWire {
    fn from(a: Action) -> Self {
        ActionWire {
            gate: a.gate,
            error_type: a.error_type,
            addressee: a.addressee,
            question: a.question,
        }
    }
}

/// Reward components of one edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRewards {
    pub r_eff: Exact,
    pub r_par: Exact,
    pub r_fmt: Exact,
    pub r_edge: Exact,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub state: EdgeState,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    pub residual_flag: bool,
    pub counter: u32,
    pub rewards: EdgeRewards,
    pub latency_units: u32,
    pub cost_tokens: u32,
    /// Injected fault label when the producer knows it; absent means unlabeled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_type: Option<ErrorType>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<EdgeRecord>,
    pub terminal_score: bool,
    pub terminal_reward: Exact,
    pub episode_seed: u64,
    /// Tokens the pipeline spends on its own handoffs, clarifications excluded.
    pub base_tokens: u64,
    pub env_hash: String,
}

impl Trajectory {
    pub fn empty(episode_seed: u64, env_hash: impl Into<String>) -> Self {
        Trajectory {
            records: Vec::new(),
            terminal_score: true,
            terminal_reward: Exact::ZERO,
            episode_seed,
            base_tokens: 0,
            env_hash: env_hash.into(),
        }
    }

    pub fn asks(&self) -> usize {
        self.records.iter().filter(|r| r.action.gate).count()
    }

    pub fn cost_tokens(&self) -> u64 {
        self.records.iter().map(|r| u64::from(r.cost_tokens)).sum()
    }

    pub fn latency_units(&self) -> u64 {
        self.records.iter().map(|r| u64::from(r.latency_units)).sum()
    }

    /// Checks the invariants that tie records to the reward configuration.
    pub fn check(&self, alpha_eff: Exact, alpha_ans: Exact, budget: Option<u32>) -> Result<()> {
        let mut last_step: Option<u32> = None;
        for r in &self.records {
            if r.reply.is_some() != r.action.gate {
                return Err(Error::Data(format!(
                    "edge {}: reply presence does not match gate",
                    r.state.step_index
                )));
            }
            let w = &r.rewards;
            if w.r_edge != alpha_eff * w.r_eff + w.r_par + w.r_fmt {
                return Err(Error::Data(format!(
                    "edge {}: r_edge is not the weighted sum of its components",
                    r.state.step_index
                )));
            }
            if let Some(prev) = last_step {
                if r.state.step_index <= prev {
                    return Err(Error::Data("step_index must strictly increase".into()));
                }
            }
            last_step = Some(r.state.step_index);
        }
        let s = if self.terminal_score { Exact::ONE } else { Exact::ZERO };
        if self.terminal_reward != alpha_ans * s {
            return Err(Error::Data("terminal_reward != alpha_ans * terminal_score".into()));
        }
        if let Some(b) = budget {
            if self.cost_tokens() > u64::from(b) {
                return Err(Error::Data(format!(
                    "clarification cost {} exceeds budget {b}",
                    self.cost_tokens()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_are_exact_strings() {
        for t in ErrorType::ALL {
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(json, format!("\"{}\"", t.tag()));
            assert_eq!(ErrorType::from_tag(t.tag()), Some(t));
            assert_eq!(ErrorType::from_index(t.index()), Some(t));
        }
    }

    #[test]
    fn gate_zero_serializes_bare() {
        let json = serde_json::to_string(&Action::none()).unwrap();
        assert_eq!(json, r#"{"gate":false,"error_type":"NONE"}"#);
        let back: Action = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Action::none());
    }

    #[test]
    fn malformed_actions_are_rejected() {
        let bad = r#"{"gate":false,"error_type":"DG"}"#;
        assert!(serde_json::from_str::<Action>(bad).is_err());
        let bad = r#"{"gate":true,"error_type":"DG"}"#;
        assert!(serde_json::from_str::<Action>(bad).is_err());
    }
}
