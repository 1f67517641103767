//! Group-relative clipped policy optimization over edge decisions.

pub mod advantages;
pub mod rewards;
pub mod surrogate;
pub mod train;

pub use advantages::{global_advantages, local_advantages, EmaBaseline};
pub use rewards::{edge_reward, effectiveness_reward, format_reward, parsimony_reward, terminal_reward, update_counter};
pub use surrogate::{clipped_term, surrogate_and_grad, SurrogateEntry, SurrogateHyper, SurrogateOutput};
pub use train::{train_egrpo, IterationMetrics, TrainConfig, TrainOutcome, METRICS_HEADER};
