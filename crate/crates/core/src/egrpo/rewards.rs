//! Shaped edge rewards and the terminal reward, in exact rational arithmetic.

use crate::config::RewardConfig;
use crate::exact::Exact;
use crate::schema::{action_to_json, validate_schema};
use crate::types::{Action, EdgeRewards, EdgeState};

/// `+1` when an ask leaves nothing unresolved, `-1` when it does not, `0` without an ask.
pub fn effectiveness_reward(z: bool, n_next: bool) -> Exact {
    match (z, n_next) {
        (false, _) => Exact::ZERO,
        (true, false) => Exact::ONE,
        (true, true) => -Exact::ONE,
    }
}

/// Asks among the last `h` edges, the current one included.
///
/// `window` holds earlier gate bits, oldest first; only its last `h - 1`
/// entries are counted.
pub fn update_counter(window: &[bool], h: u32, z: bool) -> u32 {
    let lookback = h.saturating_sub(1) as usize;
    let prior = window.iter().rev().take(lookback).filter(|b| **b).count() as u32;
    prior + u32::from(z)
}

pub fn parsimony_reward(c: u32, lambda_sw: Exact) -> Exact {
    -(lambda_sw * Exact::int(i64::from(c.saturating_sub(1))))
}

pub fn format_reward(flag: bool, alpha_fmt: Exact) -> Exact {
    if flag {
        alpha_fmt
    } else {
        Exact::ZERO
    }
}

pub fn edge_reward(r_eff: Exact, r_par: Exact, r_fmt: Exact, alpha_eff: Exact) -> Exact {
    alpha_eff * r_eff + r_par + r_fmt
}

pub fn terminal_reward(s: bool, alpha_ans: Exact) -> Exact {
    if s {
        alpha_ans
    } else {
        Exact::ZERO
    }
}

/// Format flag of an action as the clarifier would emit it at `state`.
pub fn format_flag(action: &Action, state: &EdgeState, token_cap: u32) -> bool {
    validate_schema(&action_to_json(action, state), token_cap)
}

/// Scores one executed edge: returns the reward components and the counter `c_t`.
pub fn score_edge(
    cfg: &RewardConfig,
    prior_gates: &[bool],
    action: &Action,
    state: &EdgeState,
    residual_flag: bool,
) -> (EdgeRewards, u32) {
    let z = action.gate;
    let c = update_counter(prior_gates, cfg.window_h, z);
    let r_eff = effectiveness_reward(z, residual_flag);
    let r_par = parsimony_reward(c, cfg.lambda_sw);
    let r_fmt = format_reward(format_flag(action, state, cfg.token_cap), cfg.alpha_fmt);
    let r_edge = edge_reward(r_eff, r_par, r_fmt, cfg.alpha_eff);
    (EdgeRewards { r_eff, r_par, r_fmt, r_edge }, c)
}
