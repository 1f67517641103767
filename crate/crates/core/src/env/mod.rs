//! Synthetic multi-agent relay pipeline with edge-level fault injection.
//!
//! A task is a chain of agents `a0 -> a1 -> ... -> a{L-1}`. Agent `a0` starts
//! from the query's value bound to `T0`; every later agent applies its
//! declared arithmetic step, so the final answer is exactly computable from
//! the clean payloads. Each handoff may carry one injected fault:
//!
//! * `DG` drops one required field (`value`, `unit` or `task`);
//! * `RD` replaces `ref` with a symbol that does not match the binding in the
//!   history (or the query's start symbol on the first edge);
//! * `SC` multiplies `value` by a seeded corruption factor;
//! * `CG` asks for a capability the receiver does not have.
//!
//! A clarification resolves a fault in one shot iff its type matches and it
//! is addressed to the gold party (sender for DG/RD/SC, receiver for CG).

mod config;
mod teacher;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{CorruptionRule, EnvConfig, InjectionMix, CAPABILITY_POOL};
pub use teacher::{teacher_template, GoldLabel};

use crate::config::config_hash;
use crate::error::{Error, Result};
use crate::message::{Fields, Op, DROPPABLE_FIELDS, SCHEMA_FIELDS};
use crate::types::{whitespace_tokens, Action, AgentId, EdgeState, ErrorType, HistoryEntry, Side};

/// Upper bound on reply length, in whitespace tokens.
pub const REPLY_CAP: u32 = 4;

const UNITS: [&str; 4] = ["kg", "m", "s", "usd"];

/// One injected fault and its parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Fault {
    #[serde(rename = "DG")]
    DataGap { field: String },
    #[serde(rename = "RD")]
    ReferentialDrift { alias: String },
    #[serde(rename = "SC")]
    SignalCorruption { factor: i64 },
    #[serde(rename = "CG")]
    CapabilityGap { capability: String },
}

impl Fault {
    pub fn kind(&self) -> ErrorType {
        match self {
            Fault::DataGap { .. } => ErrorType::DataGap,
            Fault::ReferentialDrift { .. } => ErrorType::ReferentialDrift,
            Fault::SignalCorruption { .. } => ErrorType::SignalCorruption,
            Fault::CapabilityGap { .. } => ErrorType::CapabilityGap,
        }
    }
}

/// The party whose clarification resolves a fault of this type.
pub fn gold_side(kind: ErrorType) -> Option<Side> {
    match kind {
        ErrorType::DataGap | ErrorType::ReferentialDrift | ErrorType::SignalCorruption => Some(Side::Sender),
        ErrorType::CapabilityGap => Some(Side::Receiver),
        ErrorType::None => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineTask {
    pub task_id: String,
    pub chain: Vec<AgentId>,
    /// Capability set of each agent, aligned with `chain`.
    pub capabilities: Vec<Vec<String>>,
    pub start_value: i64,
    pub unit: String,
    /// Step applied by agent `i` (`ops[0]` is unused: `a0` only relays).
    pub ops: Vec<Op>,
    pub ground_truth: i64,
    pub payload_schema: Vec<String>,
}

impl PipelineTask {
    pub fn edges(&self) -> usize {
        self.chain.len() - 1
    }

    /// Clean value bound to `T{i}`.
    pub fn clean_values(&self) -> Vec<i64> {
        let mut v = vec![self.start_value];
        for op in &self.ops[1..] {
            v.push(op.apply(*v.last().unwrap()));
        }
        v
    }

    fn roster(&self) -> String {
        self.chain
            .iter()
            .zip(&self.capabilities)
            .map(|(a, caps)| format!("{a}:{}", caps.join("+")))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Un-faulted handoff at edge `t`.
    pub fn clean_message(&self, t: usize) -> Fields {
        let values = self.clean_values();
        let mut f = Fields::default();
        f.push("ref", format!("T{t}"));
        f.push("value", values[t].to_string());
        f.push("unit", self.unit.clone());
        f.push("task", self.ops[t + 1].render());
        f.push("out", format!("T{}", t + 1));
        f.push("requires", "arith");
        f
    }

    /// Subgoal text for edge `t`; declares the plausible range of the carried value.
    pub fn query_for(&self, t: usize) -> String {
        let v = self.clean_values()[t];
        let lo = (v + 1) / 2;
        let hi = 2 * v;
        format!(
            "id={} start=T0 value={} unit={} roster={} step={t} range={lo}..{hi}",
            self.task_id,
            self.start_value,
            self.unit,
            self.roster()
        )
    }
}

/// Per-type injection probabilities and the realized per-edge faults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub injection_probabilities: InjectionMix,
    pub faults: Vec<Option<Fault>>,
}

impl FaultPlan {
    pub fn labels(&self) -> Vec<ErrorType> {
        self.faults
            .iter()
            .map(|f| f.as_ref().map_or(ErrorType::None, Fault::kind))
            .collect()
    }
}

fn apply_fault(mut msg: Fields, fault: Option<&Fault>) -> Fields {
    match fault {
        None => {}
        Some(Fault::DataGap { field }) => {
            msg.remove(field);
        }
        Some(Fault::ReferentialDrift { alias }) => msg.set("ref", alias.clone()),
        Some(Fault::SignalCorruption { factor }) => {
            let v: i64 = msg.get("value").and_then(|v| v.parse().ok()).unwrap_or(0);
            msg.set("value", (v * factor).to_string());
        }
        Some(Fault::CapabilityGap { capability }) => msg.set("requires", capability.clone()),
    }
    msg
}

/// Result of executing one controller action on the current edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub reply: Option<String>,
    /// `n_{t+1}`: whether uncertainty persists after this edge.
    pub residual_flag: bool,
    /// Whether an injected fault on this edge is left unresolved.
    pub fault_residual: bool,
    pub cost_tokens: u32,
    pub latency_units: u32,
    pub gold_type: ErrorType,
}

#[derive(Clone, Debug)]
pub struct EpisodeState {
    config: Arc<EnvConfig>,
    pub seed: u64,
    pub task: PipelineTask,
    pub plan: FaultPlan,
    pub cursor: usize,
    pub residual_faults: Vec<bool>,
    /// Gate bits of every processed edge, oldest first.
    pub ask_history: Vec<bool>,
    pub tokens_spent: u32,
    pub latency_spent: u32,
    pub base_tokens: u64,
    pub budget: u32,
    history: Vec<HistoryEntry>,
}

/// Immutable environment: a validated config plus its hash.
#[derive(Clone, Debug)]
pub struct Environment {
    config: Arc<EnvConfig>,
    hash: String,
}

/// Deterministic seed derivation shared by every seeded component.
pub fn mix_seed(base: u64, seed: u64) -> u64 {
    // splitmix64 finalizer over both inputs
    let mut z = base.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ seed;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Environment {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let hash = config_hash(&config);
        Ok(Environment { config: Arc::new(config), hash })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Deterministic episode for `seed`.
    pub fn reset(&self, seed: u64) -> EpisodeState {
        let cfg = &*self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, seed));
        let (lo, hi) = cfg.chain_length_range;
        let len = rng.gen_range(lo..=hi) as usize;
        let chain: Vec<AgentId> = (0..len).map(|i| AgentId::new(format!("a{i}"))).collect();
        let capabilities: Vec<Vec<String>> = (0..len)
            .map(|_| {
                let mut caps = vec!["arith".to_string()];
                if rng.gen_bool(0.5) {
                    caps.push(CAPABILITY_POOL[rng.gen_range(0..CAPABILITY_POOL.len())].to_string());
                }
                caps
            })
            .collect();
        let start_value = rng.gen_range(1..=20);
        let unit = UNITS[rng.gen_range(0..UNITS.len())].to_string();
        let ops: Vec<Op> = (0..len)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    Op::Add(rng.gen_range(1..=9))
                } else {
                    Op::Mul(rng.gen_range(2..=3))
                }
            })
            .collect();
        let mut task = PipelineTask {
            task_id: format!("{}-{seed}", self.hash),
            chain,
            capabilities,
            start_value,
            unit,
            ops,
            ground_truth: 0,
            payload_schema: SCHEMA_FIELDS.iter().map(|s| s.to_string()).collect(),
        };
        task.ground_truth = *task.clean_values().last().unwrap();

        let mix = &cfg.injection_probabilities;
        let faults: Vec<Option<Fault>> = (0..task.edges())
            .map(|t| {
                let u: f64 = rng.gen();
                let kind = mix.sample(u, cfg.fault_rate)?;
                Some(match kind {
                    ErrorType::DataGap => Fault::DataGap {
                        field: DROPPABLE_FIELDS[rng.gen_range(0..DROPPABLE_FIELDS.len())].to_string(),
                    },
                    ErrorType::ReferentialDrift => {
                        // earlier bindings, or the not-yet-bound output symbol
                        let mut aliases: Vec<String> = (0..t).map(|j| format!("T{j}")).collect();
                        aliases.push(format!("T{}", t + 1));
                        Fault::ReferentialDrift { alias: aliases[rng.gen_range(0..aliases.len())].clone() }
                    }
                    ErrorType::SignalCorruption => Fault::SignalCorruption {
                        factor: cfg.corruption_rule.factors[rng.gen_range(0..cfg.corruption_rule.factors.len())],
                    },
                    ErrorType::CapabilityGap => {
                        let lacking: Vec<&str> = CAPABILITY_POOL
                            .iter()
                            .copied()
                            .filter(|c| !task.capabilities[t + 1].iter().any(|have| have == c))
                            .collect();
                        Fault::CapabilityGap { capability: lacking[rng.gen_range(0..lacking.len())].to_string() }
                    }
                    ErrorType::None => unreachable!("sample never yields NONE"),
                })
            })
            .collect();
        let edges = task.edges();
        EpisodeState {
            config: Arc::clone(&self.config),
            seed,
            task,
            plan: FaultPlan { injection_probabilities: mix.clone(), faults },
            cursor: 0,
            residual_faults: vec![false; edges],
            ask_history: Vec::new(),
            tokens_spent: 0,
            latency_spent: 0,
            base_tokens: 0,
            budget: cfg.budget_tokens,
            history: Vec::new(),
        }
    }

    /// Teacher judge: gold label for a state this environment emitted.
    pub fn teacher_label(&self, state: &EdgeState) -> Result<GoldLabel> {
        teacher::label(self, state)
    }
}

impl EpisodeState {
    pub fn is_terminal(&self) -> bool {
        self.cursor >= self.task.edges()
    }

    pub fn edges(&self) -> usize {
        self.task.edges()
    }

    pub fn budget_remaining(&self) -> u32 {
        self.budget.saturating_sub(self.tokens_spent)
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn current_fault(&self) -> Option<&Fault> {
        self.plan.faults.get(self.cursor).and_then(Option::as_ref)
    }

    /// Candidate message at edge `t`, with that edge's fault applied.
    pub fn candidate_message(&self, t: usize) -> String {
        apply_fault(self.task.clean_message(t), self.plan.faults[t].as_ref()).render()
    }

    pub fn emit_edge(&self) -> Result<EdgeState> {
        if self.is_terminal() {
            return Err(Error::Lifecycle("emit_edge called after the episode terminated".into()));
        }
        let t = self.cursor;
        let bound = self.config.history_bound;
        let start = self.history.len().saturating_sub(bound);
        Ok(EdgeState {
            query: self.task.query_for(t),
            sender: self.task.chain[t].clone(),
            receiver: self.task.chain[t + 1].clone(),
            message: self.candidate_message(t),
            history: self.history[start..].to_vec(),
            step_index: t as u32,
            budget_remaining: self.budget_remaining(),
        })
    }

    fn correcting_reply(&self, fault: &Fault) -> String {
        let clean = self.task.clean_message(self.cursor);
        match fault {
            Fault::DataGap { field } => format!("resend: {field}={}", clean.get(field).unwrap_or("?")),
            Fault::ReferentialDrift { .. } => format!("binding: ref={}", clean.get("ref").unwrap_or("?")),
            Fault::SignalCorruption { .. } => format!("corrected: value={}", clean.get("value").unwrap_or("?")),
            Fault::CapabilityGap { .. } => "reroute accepted: requires=arith".to_string(),
        }
    }

    /// Executes `action` on the current edge and advances the cursor.
    pub fn apply_action(&mut self, action: &Action) -> Result<StepOutcome> {
        let state = self.emit_edge()?;
        action.check_shape()?;
        let t = self.cursor;
        let fault = self.plan.faults[t].clone();
        let gold_type = fault.as_ref().map_or(ErrorType::None, Fault::kind);

        let (reply, residual_flag, fault_residual, delivered) = if action.gate {
            let addr = action.addressee.as_ref().expect("checked shape");
            let side = state.side_of(addr).ok_or_else(|| {
                Error::Contract(format!(
                    "addressee {addr} is neither sender {} nor receiver {}",
                    state.sender, state.receiver
                ))
            })?;
            match &fault {
                Some(f) if action.error_type == f.kind() && Some(side) == gold_side(f.kind()) => {
                    (self.correcting_reply(f), false, false, self.task.clean_message(t).render())
                }
                Some(_) => ("no further detail available".to_string(), true, true, state.message.clone()),
                None => (
                    "nothing to change".to_string(),
                    self.config.clean_ask_residual,
                    false,
                    state.message.clone(),
                ),
            }
        } else {
            let faulty = fault.is_some();
            return Ok(self.advance(state, None, faulty, faulty, 0, 1, gold_type));
        };
        debug_assert!(whitespace_tokens(&reply) <= REPLY_CAP);
        let q_tokens = action.question.as_ref().map_or(0, |q| q.token_count);
        let cost = q_tokens + whitespace_tokens(&reply);
        let mut delivered_state = state;
        delivered_state.message = delivered;
        Ok(self.advance(delivered_state, Some(reply), residual_flag, fault_residual, cost, 2, gold_type))
    }

    #[allow(clippy::too_many_arguments)]
    fn advance(
        &mut self,
        delivered: EdgeState,
        reply: Option<String>,
        residual_flag: bool,
        fault_residual: bool,
        cost_tokens: u32,
        latency_units: u32,
        gold_type: ErrorType,
    ) -> StepOutcome {
        let t = self.cursor;
        self.residual_faults[t] = fault_residual;
        self.ask_history.push(reply.is_some());
        self.tokens_spent += cost_tokens;
        self.latency_spent += latency_units;
        self.base_tokens +=
            u64::from(whitespace_tokens(&delivered.message)) + u64::from(self.config.agent_work_tokens);
        self.history.push(HistoryEntry {
            sender: delivered.sender,
            receiver: delivered.receiver,
            message: delivered.message,
            gate: reply.is_some(),
            reply: reply.clone(),
        });
        self.cursor += 1;
        StepOutcome { reply, residual_flag, fault_residual, cost_tokens, latency_units, gold_type }
    }

    /// Terminal correctness: 1 iff no injected fault was left unresolved.
    pub fn terminal_score(&self) -> Result<bool> {
        if !self.is_terminal() {
            return Err(Error::Lifecycle(format!(
                "terminal_score called at edge {} of {}",
                self.cursor,
                self.edges()
            )));
        }
        Ok(self.residual_faults.iter().all(|r| !r))
    }
}

#[cfg(test)]
mod tests;
