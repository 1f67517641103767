use serde::{Deserialize, Serialize};

use super::{gold_side, Environment, Fault};
use crate::error::{Error, Result};
use crate::message::{EdgeView, Fields};
use crate::question;
use crate::types::{AgentId, EdgeState, ErrorType, QuestionSpec};

/// Minimal intervention for one edge as assigned by the teacher judge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldLabel {
    pub error_type: ErrorType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addressee: Option<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<QuestionSpec>,
}

impl GoldLabel {
    pub fn none() -> Self {
        GoldLabel { error_type: ErrorType::None, addressee: None, question: None }
    }

    pub fn is_ask(&self) -> bool {
        self.error_type.is_fault()
    }
}

/// Template the teacher picks for a fault: the one that names the fault's parameter.
pub fn teacher_template(fault: &Fault) -> usize {
    match fault {
        Fault::DataGap { field } => match field.as_str() {
            "value" => 0,
            "unit" => 1,
            "task" => 2,
            _ => 3,
        },
        _ => 0,
    }
}

pub(super) fn label(env: &Environment, state: &EdgeState) -> Result<GoldLabel> {
    let unknown = |why: &str| Error::UnknownEdge(format!("edge {}: {why}", state.step_index));
    let query = Fields::parse(&state.query);
    let id = query.get("id").ok_or_else(|| unknown("query carries no task id"))?;
    let (hash, seed) = id.rsplit_once('-').ok_or_else(|| unknown("malformed task id"))?;
    if hash != env.hash() {
        return Err(unknown("task id belongs to another environment"));
    }
    let seed: u64 = seed.parse().map_err(|_| unknown("malformed task seed"))?;
    let episode = env.reset(seed);
    let t = state.step_index as usize;
    if t >= episode.edges() {
        return Err(unknown("step index beyond the chain"));
    }
    if episode.candidate_message(t) != state.message
        || episode.task.chain[t] != state.sender
        || episode.task.chain[t + 1] != state.receiver
    {
        return Err(unknown("state does not match the regenerated episode"));
    }
    let Some(fault) = &episode.plan.faults[t] else {
        return Ok(GoldLabel::none());
    };
    let kind = fault.kind();
    let side = gold_side(kind).expect("faults have a gold side");
    let view = EdgeView::new(state);
    let question = question::build(kind, teacher_template(fault), state, &view)?;
    Ok(GoldLabel {
        error_type: kind,
        addressee: Some(state.addressee(side).clone()),
        question: Some(question),
    })
}
