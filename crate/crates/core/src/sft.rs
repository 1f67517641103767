//! Teacher-labeled edge corpus and supervised training of the policy heads.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{mix_seed, Environment, GoldLabel};
use crate::error::{Error, Result};
use crate::policy::{
    accumulate_grad_ask, accumulate_grad_type, featurize, forward, Choice, FeatureConfig, FeatureVector, Gradient,
    PolicyParams,
};
use crate::question::{self, hex};
use crate::types::{Action, EdgeState};

pub const CORPUS_VERSION: u32 = 1;
pub const CORPUS_KIND: &str = "agentask-corpus";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusExample {
    pub state: EdgeState,
    pub label: GoldLabel,
    /// `1[label.error_type != NONE]`.
    pub mask_m: bool,
    /// Episode the state came from; drives the held-out split.
    pub episode_seed: u64,
}

impl CorpusExample {
    pub fn new(state: EdgeState, label: GoldLabel, episode_seed: u64) -> Self {
        let mask_m = label.is_ask();
        CorpusExample { state, label, mask_m, episode_seed }
    }

    pub fn check(&self) -> Result<()> {
        if self.mask_m != self.label.error_type.is_fault() {
            return Err(Error::Data(format!(
                "mask {} disagrees with label type {}",
                u8::from(self.mask_m),
                self.label.error_type
            )));
        }
        Ok(())
    }

    /// Index form of the label, validated against the state.
    pub fn choice(&self) -> Result<Choice> {
        self.check()?;
        if !self.mask_m {
            return Ok(Choice::NoAsk);
        }
        let (Some(addr), Some(q)) = (&self.label.addressee, &self.label.question) else {
            return Err(Error::Data(format!(
                "{} label at step {} lacks an addressee or question",
                self.label.error_type, self.state.step_index
            )));
        };
        let action = Action::ask(self.label.error_type, addr.clone(), q.clone());
        Choice::from_action(&self.state, &action).map_err(|e| Error::Data(e.to_string()))
    }

    fn key(&self) -> String {
        let json = serde_json::to_vec(&(&self.state, &self.label)).expect("example serializes");
        hex(&Sha256::digest(&json))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub env_hash: String,
    pub seed_start: u64,
    pub seed_end: u64,
    /// Edges the teacher failed to label.
    pub skipped: usize,
    /// Examples removed as exact duplicates.
    pub duplicates: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub provenance: Provenance,
    pub examples: Vec<CorpusExample>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusHeader {
    version: u32,
    kind: String,
    provenance: Provenance,
}

impl Corpus {
    /// Content hash over provenance and examples.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for line in self.lines() {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize()[..8])
    }

    /// Per-type label counts, in head order.
    pub fn label_counts(&self) -> [usize; 5] {
        let mut c = [0; 5];
        for e in &self.examples {
            c[e.label.error_type.index()] += 1;
        }
        c
    }

    pub fn lines(&self) -> Vec<String> {
        let header = CorpusHeader {
            version: CORPUS_VERSION,
            kind: CORPUS_KIND.into(),
            provenance: self.provenance.clone(),
        };
        let mut out = vec![serde_json::to_string(&header).expect("header serializes")];
        out.extend(self.examples.iter().map(|e| serde_json::to_string(e).expect("example serializes")));
        out
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for line in self.lines() {
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Corpus> {
        let mut lines = r.lines().enumerate();
        let header: CorpusHeader = match lines.next() {
            Some((_, line)) => serde_json::from_str(&line?).map_err(|e| Error::Parse { line: 1, message: e.to_string() })?,
            None => return Err(Error::Parse { line: 1, message: "empty corpus file".into() }),
        };
        if header.kind != CORPUS_KIND {
            return Err(Error::Parse { line: 1, message: format!("expected kind {CORPUS_KIND:?}, found {:?}", header.kind) });
        }
        if header.version != CORPUS_VERSION {
            return Err(Error::Version { expected: CORPUS_VERSION, found: header.version.to_string() });
        }
        let mut examples = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: CorpusExample =
                serde_json::from_str(&line).map_err(|err| Error::Parse { line: i + 1, message: err.to_string() })?;
            e.check().map_err(|err| Error::Parse { line: i + 1, message: err.to_string() })?;
            examples.push(e);
        }
        Ok(Corpus { provenance: header.provenance, examples })
    }
}

/// Rolls out every seed, executing the teacher's label, and records one example per edge.
///
/// Edges the teacher cannot label are skipped, counted in the provenance and
/// executed without intervention.
pub fn build_corpus<T>(env: &Environment, seeds: Range<u64>, teacher: T) -> Result<Corpus>
where
    T: Fn(&EdgeState) -> Result<GoldLabel> + Sync,
{
    let per_seed: Vec<(Vec<CorpusExample>, usize)> = seeds
        .clone()
        .into_par_iter()
        .map(|seed| {
            let mut ep = env.reset(seed);
            let mut out = Vec::new();
            let mut skipped = 0;
            while !ep.is_terminal() {
                let state = ep.emit_edge()?;
                let action = match teacher(&state) {
                    Ok(label) => {
                        let action = match (&label.addressee, &label.question) {
                            (Some(a), Some(q)) if label.is_ask() => Action::ask(label.error_type, a.clone(), q.clone()),
                            _ => Action::none(),
                        };
                        out.push(CorpusExample::new(state, label, seed));
                        action
                    }
                    Err(_) => {
                        skipped += 1;
                        Action::none()
                    }
                };
                ep.apply_action(&action)?;
            }
            Ok((out, skipped))
        })
        .collect::<Result<_>>()?;

    let mut seen = HashSet::new();
    let mut examples = Vec::new();
    let mut skipped = 0;
    let mut duplicates = 0;
    for (batch, s) in per_seed {
        skipped += s;
        for e in batch {
            if seen.insert(e.key()) {
                examples.push(e);
            } else {
                duplicates += 1;
            }
        }
    }
    Ok(Corpus {
        provenance: Provenance {
            env_hash: env.hash().to_string(),
            seed_start: seeds.start,
            seed_end: seeds.end,
            skipped,
            duplicates,
        },
        examples,
    })
}

/// Corpus labeled by the simulator's own teacher judge.
pub fn build_sim_corpus(env: &Environment, seeds: Range<u64>) -> Result<Corpus> {
    build_corpus(env, seeds, |s| env.teacher_label(s))
}

/// An example reduced to what the loss needs.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub x: FeatureVector,
    pub choice: Choice,
    pub episode_seed: u64,
}

pub fn prepare(examples: &[CorpusExample], features: &FeatureConfig) -> Result<Vec<Prepared>> {
    examples
        .iter()
        .map(|e| Ok(Prepared { x: featurize(&e.state, features), choice: e.choice()?, episode_seed: e.episode_seed }))
        .collect()
}

#[derive(Clone, Debug)]
pub struct SftLoss {
    pub loss: f64,
    pub l_type: f64,
    pub l_ask: f64,
    /// Gradient of `loss` (descent direction is its negative).
    pub gradient: Gradient,
}

/// `L_type + lambda_ask * L_ask` over prepared examples, with its gradient.
pub fn sft_loss_prepared(params: &PolicyParams, batch: &[Prepared], lambda_ask: f64) -> Result<SftLoss> {
    if batch.is_empty() {
        return Err(Error::Contract("sft batch is empty".into()));
    }
    let n = batch.len() as f64;
    let mut gradient = params.zeros_like();
    let (mut l_type, mut l_ask) = (0.0, 0.0);
    for p in batch {
        let heads = forward(params, &p.x)?;
        let kind = p.choice.kind();
        l_type -= heads.type_probs[kind.index()].ln() / n;
        accumulate_grad_type(&heads, &p.x, kind, -1.0 / n, &mut gradient);
        if let Choice::Ask { kind, side, template } = p.choice {
            let k = kind.index();
            l_ask -= (heads.addr_probs[k][side.index()].ln() + heads.question_probs[k][template].ln()) / n;
            if lambda_ask != 0.0 {
                accumulate_grad_ask(&heads, &p.x, kind, side, template, -lambda_ask / n, &mut gradient);
            }
        }
    }
    Ok(SftLoss { loss: l_type + lambda_ask * l_ask, l_type, l_ask, gradient })
}

pub fn sft_loss(params: &PolicyParams, batch: &[CorpusExample], lambda_ask: f64) -> Result<SftLoss> {
    sft_loss_prepared(params, &prepare(batch, &params.features)?, lambda_ask)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_ask: f64,
    pub seed: u64,
    /// Epochs without held-out improvement before stopping.
    pub patience: usize,
    pub features: FeatureConfig,
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig {
            lr: 0.5,
            epochs: 200,
            batch_size: 64,
            lambda_ask: 1.0,
            seed: 0,
            patience: 20,
            features: FeatureConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub heldout_loss: f64,
}

#[derive(Clone, Debug)]
pub struct SftOutcome {
    pub params: PolicyParams,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    pub train: Vec<Prepared>,
    pub heldout: Vec<Prepared>,
}

/// Whether an episode seed lands in the 10% held-out split.
pub fn is_heldout(seed: u64, split_seed: u64) -> bool {
    mix_seed(split_seed ^ 0x5f7, seed).is_multiple_of(10)
}

/// Minibatch gradient descent with early stopping on the held-out loss.
pub fn train_sft(corpus: &Corpus, cfg: &SftConfig) -> Result<SftOutcome> {
    if corpus.examples.is_empty() {
        return Err(Error::Data("cannot train on an empty corpus".into()));
    }
    if cfg.lr.is_nan() || cfg.lr <= 0.0 || cfg.batch_size == 0 {
        return Err(Error::Config("lr and batch_size must be positive".into()));
    }
    let all = prepare(&corpus.examples, &cfg.features)?;
    let (mut heldout, mut train): (Vec<_>, Vec<_>) = all.into_iter().partition(|p| is_heldout(p.episode_seed, cfg.seed));
    if train.is_empty() {
        std::mem::swap(&mut train, &mut heldout);
    }
    let selection = if heldout.is_empty() { &train } else { &heldout };

    let mut params = PolicyParams::zeros(cfg.features.clone());
    let mut best = (sft_loss_prepared(&params, selection, cfg.lambda_ask)?.loss, params.clone(), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Prepared> = chunk.iter().map(|&i| train[i].clone()).collect();
            let step = sft_loss_prepared(&params, &batch, cfg.lambda_ask)?;
            if !step.loss.is_finite() {
                return Err(Error::TrainingAborted(format!("epoch {epoch}: loss diverged to {}", step.loss)));
            }
            params.axpy(-cfg.lr, &step.gradient);
        }
        let train_loss = sft_loss_prepared(&params, &train, cfg.lambda_ask)?.loss;
        let heldout_loss = sft_loss_prepared(&params, selection, cfg.lambda_ask)?.loss;
        if !train_loss.is_finite() || !heldout_loss.is_finite() || params.check().is_err() {
            return Err(Error::TrainingAborted(format!(
                "epoch {epoch}: loss diverged (train {train_loss}, held-out {heldout_loss})"
            )));
        }
        log.push(EpochLog { epoch, train_loss, heldout_loss });
        if heldout_loss < best.0 {
            best = (heldout_loss, params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(SftOutcome { params: best.1, best_epoch: best.2, log, train, heldout })
}

/// Greedy-decoding accuracies of each head on labeled examples.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadAccuracy {
    pub type_acc: f64,
    /// Over examples whose gold type is a fault.
    pub addressee_acc: f64,
    pub template_acc: f64,
}

pub fn head_accuracy(params: &PolicyParams, examples: &[Prepared]) -> Result<HeadAccuracy> {
    let (mut t_ok, mut a_ok, mut q_ok, mut asks) = (0usize, 0usize, 0usize, 0usize);
    for p in examples {
        let heads = forward(params, &p.x)?;
        let pred = heads.greedy();
        t_ok += usize::from(pred.kind() == p.choice.kind());
        if let Choice::Ask { kind, side, template } = p.choice {
            asks += 1;
            let k = kind.index();
            let best_side = (0..2).max_by(|a, b| heads.addr_probs[k][*a].total_cmp(&heads.addr_probs[k][*b])).unwrap();
            let best_q = (0..question::TEMPLATES_PER_TYPE)
                .max_by(|a, b| heads.question_probs[k][*a].total_cmp(&heads.question_probs[k][*b]))
                .unwrap();
            a_ok += usize::from(best_side == side.index());
            q_ok += usize::from(best_q == template);
        }
    }
    let n = examples.len().max(1) as f64;
    let m = asks.max(1) as f64;
    Ok(HeadAccuracy { type_acc: t_ok as f64 / n, addressee_acc: a_ok as f64 / m, template_acc: q_ok as f64 / m })
}

/// Share of examples per gold type.
pub fn label_distribution(examples: &[CorpusExample]) -> [f64; 5] {
    let mut c = [0.0; 5];
    for e in examples {
        c[e.label.error_type.index()] += 1.0;
    }
    let n = examples.len().max(1) as f64;
    c.map(|v| v / n)
}
