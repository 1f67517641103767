//! Edge-level clarification control for multi-agent message-passing pipelines.
//!
//! The crate contains a seeded relay-pipeline simulator with fault injection
//! ([`env`]), a factored ask policy with exact log-probabilities and
//! gradients ([`policy`]), supervised transfer from a teacher judge
//! ([`sft`]), the group-relative clipped RL stage ([`egrpo`]) and trace
//! analytics ([`audit`]).

pub mod audit;
pub mod config;
pub mod egrpo;
pub mod env;
pub mod error;
pub mod exact;
pub mod message;
pub mod pipeline;
pub mod policy;
pub mod question;
pub mod rollout;
pub mod schema;
pub mod sft;
pub mod trace;
pub mod types;

pub use error::{Error, Result};
pub use exact::Exact;
