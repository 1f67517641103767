//! Factored clarifier policy.
//!
//! `pi(a|x) = p_type(t|x) * [p_addr(v|x,t) * p_q(q|x,t)]^[t != NONE]`. The
//! gate is not a separate head: `z = 1` iff the sampled type is not `NONE`, so
//! `pi(z=0|x) = p_type(NONE|x)`. All heads are linear-softmax over the
//! feature vector; the addressee head also sees a one-hot of the type.

pub mod features;
pub mod params;

use rand::Rng;

pub use features::{featurize, FeatureConfig, FeatureVector, FEATURE_DIM, FEATURE_NAMES};
pub use params::{param_count, Checkpoint, Gradient, PolicyParams, N_FAULTS, N_SIDES, N_TYPES};

use crate::env::REPLY_CAP;
use crate::error::{Error, Result};
use crate::message::EdgeView;
use crate::question::{self, TEMPLATES_PER_TYPE};
use crate::types::{Action, EdgeState, ErrorType, Side};

/// Index form of an action: the policy's finite action space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Choice {
    NoAsk,
    Ask { kind: ErrorType, side: Side, template: usize },
}

impl Choice {
    pub fn kind(self) -> ErrorType {
        match self {
            Choice::NoAsk => ErrorType::None,
            Choice::Ask { kind, .. } => kind,
        }
    }

    /// Every action, `NoAsk` first.
    pub fn all() -> Vec<Choice> {
        let mut out = vec![Choice::NoAsk];
        for kind in ErrorType::FAULTS {
            for side in Side::ALL {
                for template in 0..TEMPLATES_PER_TYPE {
                    out.push(Choice::Ask { kind, side, template });
                }
            }
        }
        out
    }

    pub fn from_action(state: &EdgeState, action: &Action) -> Result<Choice> {
        action.check_shape()?;
        if !action.gate {
            return Ok(Choice::NoAsk);
        }
        let addr = action.addressee.as_ref().expect("checked shape");
        let side = state
            .side_of(addr)
            .ok_or_else(|| Error::Contract(format!("addressee {addr} is not an endpoint of this edge")))?;
        let q = action.question.as_ref().expect("checked shape");
        let template = question::template_index(action.error_type, &q.template_id).ok_or_else(|| {
            Error::Contract(format!("template {:?} is outside the {} library", q.template_id, action.error_type))
        })?;
        Ok(Choice::Ask { kind: action.error_type, side, template })
    }

    pub fn to_action(self, state: &EdgeState) -> Action {
        match self {
            Choice::NoAsk => Action::none(),
            Choice::Ask { kind, side, template } => {
                let view = EdgeView::new(state);
                let q = question::build(kind, template, state, &view).expect("template index in range");
                Action::ask(kind, state.addressee(side).clone(), q)
            }
        }
    }
}

/// Worst-case clarification cost: longest template plus the longest reply.
pub fn ask_cost_bound() -> u32 {
    question::max_question_tokens() + REPLY_CAP
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadDistributions {
    pub type_probs: [f64; N_TYPES],
    /// Addressee distribution conditioned on each fault type.
    pub addr_probs: [[f64; N_SIDES]; N_FAULTS],
    /// Template distribution conditioned on each fault type.
    pub question_probs: [[f64; TEMPLATES_PER_TYPE]; N_FAULTS],
}

fn softmax<const N: usize>(logits: [f64; N]) -> [f64; N] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.map(|l| (l - m).exp());
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

impl HeadDistributions {
    pub fn prob(&self, c: Choice) -> f64 {
        self.log_prob(c).exp()
    }

    pub fn log_prob(&self, c: Choice) -> f64 {
        match c {
            Choice::NoAsk => self.type_probs[ErrorType::NONE_INDEX].ln(),
            Choice::Ask { kind, side, template } => {
                let k = kind.index();
                self.type_probs[k].ln() + self.addr_probs[k][side.index()].ln() + self.question_probs[k][template].ln()
            }
        }
    }

    pub fn greedy(&self) -> Choice {
        let k = argmax(&self.type_probs);
        if k == ErrorType::NONE_INDEX {
            return Choice::NoAsk;
        }
        Choice::Ask {
            kind: ErrorType::from_index(k).unwrap(),
            side: Side::from_index(argmax(&self.addr_probs[k])).unwrap(),
            template: argmax(&self.question_probs[k]),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Choice {
        fn draw<R: Rng>(p: &[f64], rng: &mut R) -> usize {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, pi) in p.iter().enumerate() {
                acc += pi;
                if u < acc {
                    return i;
                }
            }
            p.len() - 1
        }
        let k = draw(&self.type_probs, rng);
        if k == ErrorType::NONE_INDEX {
            return Choice::NoAsk;
        }
        let side = draw(&self.addr_probs[k], rng);
        let template = draw(&self.question_probs[k], rng);
        Choice::Ask { kind: ErrorType::from_index(k).unwrap(), side: Side::from_index(side).unwrap(), template }
    }
}

/// Softmax of every head's logits at feature vector `x`.
pub fn forward(params: &PolicyParams, x: &FeatureVector) -> Result<HeadDistributions> {
    let x = x.as_slice();
    if x.len() != FEATURE_DIM || params.theta.len() != param_count() {
        return Err(Error::Contract(format!(
            "dimension mismatch: features {} (want {FEATURE_DIM}), params {} (want {})",
            x.len(),
            params.theta.len(),
            param_count()
        )));
    }
    let th = &params.theta;
    let dot = |base: usize| -> f64 { (0..FEATURE_DIM).map(|j| th[base + j] * x[j]).sum() };

    let type_probs = softmax(std::array::from_fn(|k| dot(PolicyParams::type_w(k, 0)) + th[PolicyParams::type_b(k)]));
    let addr_probs = std::array::from_fn(|k| {
        softmax(std::array::from_fn(|s| {
            dot(PolicyParams::addr_w(s, 0)) + th[PolicyParams::addr_w(s, FEATURE_DIM + k)] + th[PolicyParams::addr_b(s)]
        }))
    });
    let question_probs = std::array::from_fn(|k| {
        softmax(std::array::from_fn(|q| dot(PolicyParams::q_w(k, q, 0)) + th[PolicyParams::q_b(k, q)]))
    });
    Ok(HeadDistributions { type_probs, addr_probs, question_probs })
}

/// Adds `scale * grad log p_type(kind|x)` into `grad`.
pub fn accumulate_grad_type(heads: &HeadDistributions, x: &FeatureVector, kind: ErrorType, scale: f64, grad: &mut Gradient) {
    let x = x.as_slice();
    let g = &mut grad.theta;
    for k in 0..N_TYPES {
        let delta = scale * (f64::from(u8::from(k == kind.index())) - heads.type_probs[k]);
        if delta == 0.0 {
            continue;
        }
        for (j, xj) in x.iter().enumerate() {
            g[PolicyParams::type_w(k, j)] += delta * xj;
        }
        g[PolicyParams::type_b(k)] += delta;
    }
}

/// Adds `scale * grad [log p_addr(side|x,kind) + log p_q(template|x,kind)]` into `grad`.
pub fn accumulate_grad_ask(
    heads: &HeadDistributions,
    x: &FeatureVector,
    kind: ErrorType,
    side: Side,
    template: usize,
    scale: f64,
    grad: &mut Gradient,
) {
    let x = x.as_slice();
    let g = &mut grad.theta;
    let k = kind.index();
    for s in 0..N_SIDES {
        let delta = scale * (f64::from(u8::from(s == side.index())) - heads.addr_probs[k][s]);
        for (j, xj) in x.iter().enumerate() {
            g[PolicyParams::addr_w(s, j)] += delta * xj;
        }
        g[PolicyParams::addr_w(s, FEATURE_DIM + k)] += delta;
        g[PolicyParams::addr_b(s)] += delta;
    }
    for q in 0..TEMPLATES_PER_TYPE {
        let delta = scale * (f64::from(u8::from(q == template)) - heads.question_probs[k][q]);
        for (j, xj) in x.iter().enumerate() {
            g[PolicyParams::q_w(k, q, j)] += delta * xj;
        }
        g[PolicyParams::q_b(k, q)] += delta;
    }
}

/// Adds `scale * grad log pi(c|x)` into `grad`.
pub fn accumulate_grad_logprob(
    heads: &HeadDistributions,
    x: &FeatureVector,
    c: Choice,
    scale: f64,
    grad: &mut Gradient,
) {
    accumulate_grad_type(heads, x, c.kind(), scale, grad);
    if let Choice::Ask { kind, side, template } = c {
        accumulate_grad_ask(heads, x, kind, side, template, scale, grad);
    }
}

/// Exact log-probability of `action` at `state`.
pub fn action_logprob(params: &PolicyParams, state: &EdgeState, action: &Action) -> Result<f64> {
    let c = Choice::from_action(state, action)?;
    let x = featurize(state, &params.features);
    Ok(forward(params, &x)?.log_prob(c))
}

/// Analytic gradient of [`action_logprob`] with respect to every parameter.
pub fn grad_logprob(params: &PolicyParams, state: &EdgeState, action: &Action) -> Result<Gradient> {
    let c = Choice::from_action(state, action)?;
    let x = featurize(state, &params.features);
    let heads = forward(params, &x)?;
    let mut g = params.zeros_like();
    accumulate_grad_logprob(&heads, &x, c, 1.0, &mut g);
    Ok(g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledAction {
    pub action: Action,
    pub choice: Choice,
    pub log_prob: f64,
    /// The budget rule forced `NONE`; the policy had no choice.
    pub forced: bool,
}

/// Samples an action; asks are disabled when the remaining budget cannot cover one.
pub fn sample_action<R: Rng>(
    params: &PolicyParams,
    state: &EdgeState,
    rng: &mut R,
    budget_remaining: u32,
) -> Result<SampledAction> {
    let x = featurize(state, &params.features);
    let heads = forward(params, &x)?;
    let (choice, forced) = if budget_remaining < ask_cost_bound() {
        (Choice::NoAsk, true)
    } else {
        (heads.sample(rng), false)
    };
    Ok(SampledAction { action: choice.to_action(state), choice, log_prob: heads.log_prob(choice), forced })
}

/// Mode of every head (temperature-0 decoding), under the same budget rule.
pub fn greedy_action(params: &PolicyParams, state: &EdgeState, budget_remaining: u32) -> Result<SampledAction> {
    let x = featurize(state, &params.features);
    let heads = forward(params, &x)?;
    let (choice, forced) =
        if budget_remaining < ask_cost_bound() { (Choice::NoAsk, true) } else { (heads.greedy(), false) };
    Ok(SampledAction { action: choice.to_action(state), choice, log_prob: heads.log_prob(choice), forced })
}

/// `KL(pi || ref)` over the full action space.
pub fn kl_divergence(p: &HeadDistributions, r: &HeadDistributions) -> f64 {
    Choice::all()
        .into_iter()
        .map(|c| {
            let lp = p.log_prob(c);
            lp.exp() * (lp - r.log_prob(c))
        })
        .sum::<f64>()
        .max(0.0)
}

/// Adds `scale * grad KL(pi_theta || ref)` into `grad`.
///
/// `grad KL = sum_a pi(a) (log pi(a) - log ref(a)) grad log pi(a)`; the
/// constant term vanishes because `sum_a pi(a) grad log pi(a) = 0`.
pub fn accumulate_grad_kl(
    p: &HeadDistributions,
    r: &HeadDistributions,
    x: &FeatureVector,
    scale: f64,
    grad: &mut Gradient,
) {
    for c in Choice::all() {
        let lp = p.log_prob(c);
        let w = lp.exp() * (lp - r.log_prob(c));
        if w != 0.0 {
            accumulate_grad_logprob(p, x, c, scale * w, grad);
        }
    }
}

#[cfg(test)]
mod tests;
