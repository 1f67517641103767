use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exact::Exact;
use crate::question::hex;
use crate::schema::DEFAULT_TOKEN_CAP;

/// Reward shaping and update coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub alpha_eff: Exact,
    pub lambda_sw: Exact,
    pub alpha_fmt: Exact,
    pub alpha_ans: Exact,
    /// Sliding window of the parsimony counter, in edges.
    pub window_h: u32,
    /// Clarification token budget per episode.
    pub budget_b: u32,
    pub clip_eps: Exact,
    pub beta_kl: Exact,
    pub lambda_r: Exact,
    pub token_cap: u32,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha_eff: Exact::ONE,
            lambda_sw: Exact::new(2, 5),
            alpha_fmt: Exact::new(1, 10),
            alpha_ans: Exact::ONE,
            window_h: 3,
            budget_b: 120,
            clip_eps: Exact::new(1, 5),
            beta_kl: Exact::new(1, 50),
            lambda_r: Exact::new(1, 2),
            token_cap: DEFAULT_TOKEN_CAP,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("alpha_eff", self.alpha_eff),
            ("lambda_sw", self.lambda_sw),
            ("alpha_fmt", self.alpha_fmt),
            ("alpha_ans", self.alpha_ans),
            ("clip_eps", self.clip_eps),
            ("beta_kl", self.beta_kl),
            ("lambda_r", self.lambda_r),
        ];
        for (name, v) in nonneg {
            if v < Exact::ZERO {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.window_h < 1 {
            return Err(Error::Config("window_h must be >= 1".into()));
        }
        if self.clip_eps <= Exact::ZERO || self.clip_eps >= Exact::ONE {
            return Err(Error::Config(format!("clip_eps must lie in (0, 1), got {}", self.clip_eps)));
        }
        if self.budget_b == 0 || self.token_cap == 0 {
            return Err(Error::Config("budget_b and token_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Short content hash of any serializable config.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&json);
    hex(&digest[..8])
}
