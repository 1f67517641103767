use std::io::Write;

use agentask_core::env::GoldLabel;
use agentask_core::message::EdgeView;
use agentask_core::question;
use agentask_core::types::{EdgeState, ErrorType};

use crate::client::{chat_roundtrip, GatewayConfig, Usage, WireLog};
use crate::error::GatewayError;
use crate::prompt::clarifier_messages;
use crate::reply::{parse_clarifier_reply, ClarifierReply};

/// An LLM behind a chat endpoint acting as the clarifier or as a teacher judge.
pub struct LlmClarifier {
    pub config: GatewayConfig,
}

impl LlmClarifier {
    pub fn new(config: GatewayConfig) -> Self {
        LlmClarifier { config }
    }

    pub fn decide<W: Write>(
        &self,
        state: &EdgeState,
        log: Option<&mut WireLog<W>>,
    ) -> Result<(ClarifierReply, Usage), GatewayError> {
        let req = self.config.request(clarifier_messages(state));
        let resp = chat_roundtrip(&req, self.config.retries, log)?;
        Ok((parse_clarifier_reply(&resp.content, state), resp.usage))
    }

    /// Gold label for corpus building.
    ///
    /// The judge's free-form question is replaced by the first library
    /// template of the judged type so the label stays inside the policy's
    /// action space; type and addressee are kept as judged.
    pub fn label<W: Write>(&self, state: &EdgeState, log: Option<&mut WireLog<W>>) -> Result<GoldLabel, GatewayError> {
        let (reply, _) = self.decide(state, log)?;
        let action = reply
            .parsed
            .ok_or_else(|| GatewayError::Protocol(format!("judge reply failed the schema: {}", reply.raw)))?;
        if action.error_type == ErrorType::None {
            return Ok(GoldLabel::none());
        }
        let q = question::build(action.error_type, 0, state, &EdgeView::new(state))?;
        Ok(GoldLabel { error_type: action.error_type, addressee: action.addressee, question: Some(q) })
    }
}
