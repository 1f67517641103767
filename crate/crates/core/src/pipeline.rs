//! End-to-end recipes shared by the command line and the experiment tests:
//! corpus, supervised stage, RL stage, evaluation against the reference
//! controllers, and the parsimony/window sensitivity sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{overhead_metrics, Overhead};
use crate::config::{config_hash, RewardConfig};
use crate::egrpo::{train_egrpo, TrainConfig, TrainOutcome};
use crate::env::{EnvConfig, Environment};
use crate::error::Result;
use crate::exact::Exact;
use crate::policy::{FeatureConfig, PolicyParams};
use crate::rollout::{rollout_many, Controller};
use crate::sft::{build_sim_corpus, train_sft, SftConfig, SftOutcome};
use crate::types::Trajectory;

/// Every knob of an experiment, one section per stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub rewards: RewardConfig,
    pub sft: SftConfig,
    pub train: TrainConfig,
    /// Episode seeds `[start, end)` used to build the supervised corpus.
    pub corpus_seeds: (u64, u64),
    pub eval_episodes: u64,
    /// First evaluation episode seed; kept apart from corpus seeds.
    pub eval_seed_start: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvConfig::default(),
            rewards: RewardConfig::default(),
            sft: SftConfig::default(),
            train: TrainConfig::default(),
            corpus_seeds: (0, 300),
            eval_episodes: 500,
            eval_seed_start: 1_000_000,
        }
    }
}

impl ExperimentConfig {
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    /// Feature layout consistent with the reward window and environment.
    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            window_h: self.rewards.window_h,
            history_bound: self.env.history_bound,
            budget_b: self.env.budget_tokens,
        }
    }

    /// Reseeds every stage from one experiment seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.env.seed = seed;
        self.sft.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn eval_seeds(&self) -> Vec<u64> {
        (self.eval_seed_start..self.eval_seed_start + self.eval_episodes).collect()
    }
}

pub fn run_sft(cfg: &ExperimentConfig) -> Result<SftOutcome> {
    let env = Environment::new(cfg.env.clone())?;
    let corpus = build_sim_corpus(&env, cfg.corpus_seeds.0..cfg.corpus_seeds.1)?;
    train_sft(&corpus, &SftConfig { features: cfg.features(), ..cfg.sft.clone() })
}

pub fn run_rl(cfg: &ExperimentConfig, init: &PolicyParams) -> Result<TrainOutcome> {
    let env = Environment::new(cfg.env.clone())?;
    train_egrpo(&env, init, &cfg.rewards, &cfg.train)
}

/// Traces of `controller` on the evaluation seeds and its overhead against never-ask.
pub fn evaluate(cfg: &ExperimentConfig, controller: &Controller) -> Result<(Vec<Trajectory>, Overhead)> {
    let env = Environment::new(cfg.env.clone())?;
    let seeds = cfg.eval_seeds();
    let baseline = rollout_many(&env, &seeds, &Controller::NeverAsk, &cfg.rewards, cfg.train.seed)?;
    let traces = rollout_many(&env, &seeds, controller, &cfg.rewards, cfg.train.seed)?;
    let o = overhead_metrics(&traces, &baseline)?;
    Ok((traces, o))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda_sw: f64,
    #[serde(rename = "H")]
    pub h: u32,
    pub accuracy: f64,
    pub latency_pct: f64,
    pub extra_cost_pct: f64,
    pub asks_per_episode: f64,
}

pub const SWEEP_LAMBDAS: [&str; 3] = ["0.2", "0.4", "0.8"];
pub const SWEEP_WINDOWS: [u32; 4] = [2, 3, 4, 5];

/// Greedy E-GRPO policy metrics for one grid cell, averaged over `seeds`.
///
/// The supervised stage does not depend on the parsimony weight, so one SFT
/// run per (window, seed) is shared across the weights.
pub fn sweep(base: &ExperimentConfig, lambdas: &[Exact], windows: &[u32], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &h in windows {
        let per_seed: Vec<Vec<Overhead>> = seeds
            .par_iter()
            .map(|&s| {
                let mut cfg = base.clone().with_seed(s);
                cfg.rewards.window_h = h;
                let init = run_sft(&cfg)?.params;
                lambdas
                    .iter()
                    .map(|&l| {
                        let mut c = cfg.clone();
                        c.rewards.lambda_sw = l;
                        let trained = run_rl(&c, &init)?.params;
                        Ok(evaluate(&c, &Controller::Greedy(trained))?.1)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        for (j, &l) in lambdas.iter().enumerate() {
            let n = seeds.len() as f64;
            let mean = |f: &dyn Fn(&Overhead) -> f64| per_seed.iter().map(|v| f(&v[j])).sum::<f64>() / n;
            rows.push(SweepRow {
                lambda_sw: l.to_f64(),
                h,
                accuracy: mean(&|o| o.accuracy),
                latency_pct: mean(&|o| o.latency_pct),
                extra_cost_pct: mean(&|o| o.extra_cost_pct),
                asks_per_episode: mean(&|o| o.asks_per_episode),
            });
        }
    }
    Ok(rows)
}
