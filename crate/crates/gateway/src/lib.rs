//! Bridge between the edge controller and LLM-backed clarifiers.
//!
//! Renders the clarifier prompt for an edge, sends it over an
//! OpenAI-compatible chat-completions endpoint, and validates the reply into
//! an [`Action`](agentask_core::types::Action).

mod client;
mod error;
mod judge;
mod prompt;
mod reply;

pub use client::{chat_roundtrip, ChatMessage, ChatRequest, ChatResponse, GatewayConfig, Usage, WireLog};
pub use error::GatewayError;
pub use judge::LlmClarifier;
pub use prompt::{clarifier_messages, render_clarifier_prompt, render_context, SYSTEM_PROMPT};
pub use reply::{parse_clarifier_reply, render_reply, ClarifierReply};
