use serde::{Deserialize, Serialize};

use crate::config::config_hash;
use crate::message::EdgeView;
use crate::types::{whitespace_tokens, EdgeState};

pub const FEATURE_DIM: usize = 16;

/// Names of the feature slots, in vector order.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "bias",
    "missing_any",
    "missing_value",
    "missing_unit",
    "missing_task",
    "ref_consistency",
    "value_plausible",
    "capability_match",
    "unit_match",
    "window_asks",
    "last_asked",
    "budget_fraction",
    "step",
    "history_fill",
    "receiver_is_final",
    "message_tokens",
];

pub mod idx {
    pub const MISSING_ANY: usize = 1;
    pub const MISSING_VALUE: usize = 2;
    pub const CONSISTENCY: usize = 5;
    pub const PLAUSIBLE: usize = 6;
    pub const CAPABILITY: usize = 7;
    pub const WINDOW_ASKS: usize = 9;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Parsimony window; the window-ask feature counts gates in the last `window_h - 1` records.
    pub window_h: u32,
    pub history_bound: usize,
    pub budget_b: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { window_h: 3, history_bound: 4, budget_b: 120 }
    }
}

impl FeatureConfig {
    pub fn hash(&self) -> String {
        config_hash(&(FEATURE_NAMES, self))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn featurize(state: &EdgeState, cfg: &FeatureConfig) -> FeatureVector {
    let view = EdgeView::new(state);
    let lookback = cfg.window_h.saturating_sub(1) as usize;
    let window_asks = state.history.iter().rev().take(lookback).filter(|h| h.gate).count();
    let receiver_index = state
        .receiver
        .as_str()
        .strip_prefix('a')
        .and_then(|i| i.parse::<usize>().ok());
    let receiver_is_final = receiver_index.is_some_and(|i| i + 1 == view.roster_len);
    let budget_fraction = if cfg.budget_b == 0 {
        0.0
    } else {
        (f64::from(state.budget_remaining) / f64::from(cfg.budget_b)).min(1.0)
    };
    let v = vec![
        1.0,
        flag(view.first_missing().is_some()),
        flag(view.missing("value")),
        flag(view.missing("unit")),
        flag(view.missing("task")),
        flag(view.ref_consistent()),
        flag(view.value_plausible()),
        flag(view.capability_match()),
        flag(view.unit_match()),
        window_asks as f64,
        flag(state.history.last().is_some_and(|h| h.gate)),
        budget_fraction,
        f64::from(state.step_index) / 8.0,
        state.history.len() as f64 / cfg.history_bound.max(1) as f64,
        flag(receiver_is_final),
        f64::from(whitespace_tokens(&state.message)) / 6.0,
    ];
    debug_assert_eq!(v.len(), FEATURE_DIM);
    FeatureVector(v)
}
