use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ErrorType;

/// Capabilities an agent may hold besides `arith`; capability-gap faults request one the receiver lacks.
pub const CAPABILITY_POOL: [&str; 3] = ["code", "search", "vision"];

/// Mix of fault types among injected faults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixWire")]
pub struct InjectionMix {
    #[serde(rename = "DG")]
    pub data_gap: f64,
    #[serde(rename = "RD")]
    pub referential_drift: f64,
    #[serde(rename = "SC")]
    pub signal_corruption: f64,
    #[serde(rename = "CG")]
    pub capability_gap: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MixWire {
    Preset(String),
    Explicit {
        #[serde(rename = "DG")]
        dg: f64,
        #[serde(rename = "RD")]
        rd: f64,
        #[serde(rename = "SC")]
        sc: f64,
        #[serde(rename = "CG")]
        cg: f64,
    },
}

impl TryFrom<MixWire> for InjectionMix {
    type Error = String;

    fn try_from(w: MixWire) -> std::result::Result<Self, String> {
        match w {
            MixWire::Preset(name) => {
                InjectionMix::preset(&name).ok_or_else(|| format!("unknown injection preset {name:?}"))
            }
            MixWire::Explicit { dg, rd, sc, cg } => Ok(InjectionMix {
                data_gap: dg,
                referential_drift: rd,
                signal_corruption: sc,
                capability_gap: cg,
            }),
        }
    }
}

impl Default for InjectionMix {
    fn default() -> Self {
        Self::taxonomy()
    }
}

impl InjectionMix {
    /// Edge-level taxonomy distribution: DG 29.1%, RD 27.3%, SC 36.8%, CG 6.8%.
    pub fn taxonomy() -> Self {
        InjectionMix { data_gap: 0.291, referential_drift: 0.273, signal_corruption: 0.368, capability_gap: 0.068 }
    }

    /// Distribution pooled over clarification events: DG 36.8%, SC 30.9%, RD 20.7%, CG 11.6%.
    pub fn pooled() -> Self {
        InjectionMix { data_gap: 0.368, referential_drift: 0.207, signal_corruption: 0.309, capability_gap: 0.116 }
    }

    pub fn only(kind: ErrorType, p: f64) -> Self {
        let mut m = InjectionMix { data_gap: 0.0, referential_drift: 0.0, signal_corruption: 0.0, capability_gap: 0.0 };
        match kind {
            ErrorType::DataGap => m.data_gap = p,
            ErrorType::ReferentialDrift => m.referential_drift = p,
            ErrorType::SignalCorruption => m.signal_corruption = p,
            ErrorType::CapabilityGap => m.capability_gap = p,
            ErrorType::None => {}
        }
        m
    }

    pub fn zero() -> Self {
        Self::only(ErrorType::None, 0.0)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "taxonomy" | "section3" => Some(Self::taxonomy()),
            "pooled" => Some(Self::pooled()),
            "none" => Some(Self::zero()),
            _ => None,
        }
    }

    pub fn get(&self, kind: ErrorType) -> f64 {
        match kind {
            ErrorType::DataGap => self.data_gap,
            ErrorType::ReferentialDrift => self.referential_drift,
            ErrorType::SignalCorruption => self.signal_corruption,
            ErrorType::CapabilityGap => self.capability_gap,
            ErrorType::None => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        ErrorType::FAULTS.iter().map(|k| self.get(*k)).sum()
    }

    /// Maps a uniform draw to a fault type; each type has probability `rate * p_k`.
    pub fn sample(&self, u: f64, rate: f64) -> Option<ErrorType> {
        let mut acc = 0.0;
        for kind in ErrorType::FAULTS {
            acc += rate * self.get(kind);
            if u < acc {
                return Some(kind);
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionRule {
    /// Multiplicative factors applied to the carried value; each must be >= 3
    /// so the corrupted value leaves the declared plausible range.
    pub factors: Vec<i64>,
}

impl Default for CorruptionRule {
    fn default() -> Self {
        CorruptionRule { factors: vec![10, 100, 1000] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Inclusive range of agents per chain.
    pub chain_length_range: (u32, u32),
    pub injection_probabilities: InjectionMix,
    /// Probability that an edge carries any fault; the type is drawn from the mix.
    pub fault_rate: f64,
    pub corruption_rule: CorruptionRule,
    pub history_bound: usize,
    pub seed: u64,
    pub budget_tokens: u32,
    /// Tokens an agent spends on its own step, counted in baseline spend.
    pub agent_work_tokens: u32,
    /// Score a clarification on a clean edge as residual (it removed nothing).
    pub clean_ask_residual: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            chain_length_range: (3, 8),
            injection_probabilities: InjectionMix::default(),
            fault_rate: 0.2,
            corruption_rule: CorruptionRule::default(),
            history_bound: 4,
            seed: 0,
            budget_tokens: 120,
            agent_work_tokens: 60,
            clean_ask_residual: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.chain_length_range;
        if lo < 2 || lo > hi {
            return Err(Error::Config(format!("chain_length_range ({lo}, {hi}) must satisfy 2 <= lo <= hi")));
        }
        if hi > 12 {
            return Err(Error::Config(format!("chain length {hi} exceeds the supported maximum 12")));
        }
        let mix = &self.injection_probabilities;
        for kind in ErrorType::FAULTS {
            let p = mix.get(kind);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("injection probability for {kind} is {p}")));
            }
        }
        if mix.total() > 1.0 + 1e-9 {
            return Err(Error::Config(format!("injection probabilities sum to {} > 1", mix.total())));
        }
        if !(0.0..=1.0).contains(&self.fault_rate) {
            return Err(Error::Config(format!("fault_rate {} outside [0, 1]", self.fault_rate)));
        }
        if self.corruption_rule.factors.is_empty() || self.corruption_rule.factors.iter().any(|f| *f < 3) {
            return Err(Error::Config("corruption factors must be non-empty and >= 3".into()));
        }
        if self.history_bound == 0 {
            return Err(Error::Config("history_bound must be >= 1".into()));
        }
        Ok(())
    }

    /// Every edge faulted, all faults of `kind`.
    pub fn forced(kind: ErrorType) -> Self {
        EnvConfig { injection_probabilities: InjectionMix::only(kind, 1.0), fault_rate: 1.0, ..Default::default() }
    }

    pub fn fault_free() -> Self {
        EnvConfig { injection_probabilities: InjectionMix::zero(), ..Default::default() }
    }
}
