use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::advantages::{local_advantages, EmaBaseline};
use super::rewards::{score_edge, terminal_reward};
use super::surrogate::{surrogate_and_grad, SurrogateEntry, SurrogateHyper};
use crate::config::RewardConfig;
use crate::env::{mix_seed, Environment};
use crate::error::{Error, Result};
use crate::policy::{featurize, sample_action, PolicyParams};

/// Salt separating training episode seeds from evaluation seeds.
const TRAIN_SEED_SALT: u64 = 0x7472_6169_6e00;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Candidates sampled per edge.
    pub group_size: usize,
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    /// Ascent steps per iteration with the sampling policy frozen.
    pub update_epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Abort when the mean reference KL exceeds this.
    pub kl_ceiling: f64,
    pub ema_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            group_size: 8,
            iterations: 200,
            episodes_per_iteration: 16,
            update_epochs: 2,
            lr: 0.05,
            seed: 0,
            kl_ceiling: 5.0,
            ema_decay: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::Config(format!("group_size must be >= 2, got {}", self.group_size)));
        }
        if self.episodes_per_iteration == 0 || self.update_epochs == 0 {
            return Err(Error::Config("episodes_per_iteration and update_epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive and finite, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!("ema_decay must lie in [0, 1), got {}", self.ema_decay)));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub mean_s: f64,
    pub asks_per_episode: f64,
    /// Latency relative to a handoff-only pipeline (100 = no clarification).
    pub latency_pct: f64,
    /// Clarification tokens as a share of the pipeline's own spend.
    pub extra_cost_pct: f64,
    pub kl_mean: f64,
    pub objective: f64,
}

pub const METRICS_HEADER: &str = "iteration,mean_s,asks_per_episode,latency_pct,extra_cost_pct,kl_mean,objective";

impl IterationMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iteration,
            self.mean_s,
            self.asks_per_episode,
            self.latency_pct,
            self.extra_cost_pct,
            self.kl_mean,
            self.objective
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub metrics: Vec<IterationMetrics>,
    pub baseline: f64,
}

struct EpisodeBatch {
    entries: Vec<SurrogateEntry>,
    /// Entry index of the executed candidate at each non-forced edge.
    executed: Vec<usize>,
    terminal: f64,
    s: bool,
    asks: usize,
    edges: usize,
    latency: u64,
    cost: u64,
    base_tokens: u64,
}

fn collect_episode(
    env: &Environment,
    old: &PolicyParams,
    rewards: &RewardConfig,
    group_size: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeBatch> {
    let mut ep = env.reset(seed);
    let mut entries = Vec::new();
    let mut executed = Vec::new();
    let (mut asks, mut latency, mut cost) = (0usize, 0u64, 0u64);
    while !ep.is_terminal() {
        let state = ep.emit_edge()?;
        let x = featurize(&state, &old.features);
        let mut group = Vec::with_capacity(group_size);
        for _ in 0..group_size {
            group.push(sample_action(old, &state, rng, state.budget_remaining)?);
        }
        let out = if group[0].forced {
            ep.apply_action(&group[0].action)?
        } else {
            // each candidate is played on its own branch of the episode
            let mut scores = Vec::with_capacity(group_size);
            for c in &group {
                let mut branch = ep.clone();
                let o = branch.apply_action(&c.action)?;
                let (w, _) = score_edge(rewards, &ep.ask_history, &c.action, &state, o.residual_flag);
                scores.push(w.r_edge.to_f64());
            }
            let adv = local_advantages(&scores);
            executed.push(entries.len());
            for (c, a) in group.iter().zip(adv) {
                entries.push(SurrogateEntry { x: x.clone(), choice: c.choice, logp_old: c.log_prob, a_loc: a, a_glob: None });
            }
            ep.apply_action(&group[0].action)?
        };
        asks += usize::from(group[0].action.gate);
        latency += u64::from(out.latency_units);
        cost += u64::from(out.cost_tokens);
    }
    let s = ep.terminal_score()?;
    Ok(EpisodeBatch {
        entries,
        executed,
        terminal: terminal_reward(s, rewards.alpha_ans).to_f64(),
        s,
        asks,
        edges: ep.edges(),
        latency,
        cost,
        base_tokens: ep.base_tokens,
    })
}

/// Runs the RL stage from `init`, which also serves as the KL reference.
pub fn train_egrpo(
    env: &Environment,
    init: &PolicyParams,
    rewards: &RewardConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    rewards.validate()?;
    init.check()?;
    let hyper = SurrogateHyper {
        eps: rewards.clip_eps.to_f64(),
        lambda_r: rewards.lambda_r.to_f64(),
        beta: rewards.beta_kl.to_f64(),
    };
    let reference = init.clone();
    let mut params = init.clone();
    let mut baseline = EmaBaseline { value: 0.0, decay: cfg.ema_decay };
    let mut metrics = Vec::with_capacity(cfg.iterations);
    let e = cfg.episodes_per_iteration;
    for it in 0..cfg.iterations {
        let old = params.clone();
        let batches: Vec<EpisodeBatch> = (0..e)
            .into_par_iter()
            .map(|k| {
                let idx = (it * e + k) as u64;
                let seed = mix_seed(cfg.seed ^ TRAIN_SEED_SALT, idx);
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, cfg.seed));
                collect_episode(env, &old, rewards, cfg.group_size, seed, &mut rng)
            })
            .collect::<Result<_>>()?;

        // terminal credit, applied in episode order so the baseline is deterministic
        let mut entries = Vec::new();
        for b in &batches {
            let a_glob = b.terminal - baseline.value;
            let start = entries.len();
            entries.extend(b.entries.iter().cloned());
            for &i in &b.executed {
                entries[start + i].a_glob = Some(a_glob);
            }
            baseline.update(b.terminal);
        }

        let (mut objective, mut kl_mean) = (0.0, 0.0);
        if !entries.is_empty() {
            for _ in 0..cfg.update_epochs {
                let out = surrogate_and_grad(&params, &reference, &entries, hyper)?;
                objective = out.objective;
                kl_mean = out.kl_mean;
                if !objective.is_finite() || !out.gradient.norm().is_finite() {
                    return Err(Error::TrainingAborted(format!(
                        "iteration {it}: surrogate diverged (objective {objective})"
                    )));
                }
                if kl_mean > cfg.kl_ceiling {
                    return Err(Error::TrainingAborted(format!(
                        "iteration {it}: mean KL to reference {kl_mean:.4} exceeds ceiling {}",
                        cfg.kl_ceiling
                    )));
                }
                params.axpy(cfg.lr, &out.gradient);
            }
            params.check().map_err(|err| Error::TrainingAborted(format!("iteration {it}: {err}")))?;
        }

        let n = batches.len() as f64;
        let edges: usize = batches.iter().map(|b| b.edges).sum();
        let base: u64 = batches.iter().map(|b| b.base_tokens).sum();
        metrics.push(IterationMetrics {
            iteration: it,
            mean_s: batches.iter().filter(|b| b.s).count() as f64 / n,
            asks_per_episode: batches.iter().map(|b| b.asks).sum::<usize>() as f64 / n,
            latency_pct: 100.0 * batches.iter().map(|b| b.latency).sum::<u64>() as f64 / edges.max(1) as f64,
            extra_cost_pct: 100.0 * batches.iter().map(|b| b.cost).sum::<u64>() as f64 / base.max(1) as f64,
            kl_mean,
            objective,
        });
    }
    Ok(TrainOutcome { params, metrics, baseline: baseline.value })
}
