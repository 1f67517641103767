use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use agentask_core::audit::{
    annotate_distribution, distribution_csv, one_shot_csv, one_shot_resolution, overhead_csv, overhead_metrics,
    text_report,
};
use agentask_core::egrpo::METRICS_HEADER;
use agentask_core::env::Environment;
use agentask_core::exact::Exact;
use agentask_core::pipeline::{run_rl, sweep, ExperimentConfig, SWEEP_LAMBDAS, SWEEP_WINDOWS};
use agentask_core::policy::{ask_cost_bound, Checkpoint, PolicyParams};
use agentask_core::rollout::{rollout_many, run_episode_with, Controller};
use agentask_core::sft::{build_corpus, build_sim_corpus, train_sft, Corpus, SftConfig};
use agentask_core::trace::{read_traces, write_traces};
use agentask_core::types::{Action, Trajectory};
use agentask_core::Error as CoreError;
use agentask_gateway::{LlmClarifier, WireLog};
use serde_json::json;

use crate::config::{self, Loaded};
use crate::error::{CliError, Result};
use crate::{Cli, Command, Global};

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    }
    let loaded = config::load(g.config.as_deref(), &g.overrides, g.seed)?;
    fs::create_dir_all(&g.out)?;
    let out = Output { dir: g.out.clone(), files: Vec::new() };
    match cli.command {
        Command::Simulate { episodes, start } => simulate(g, &loaded, out, episodes, start),
        Command::BuildCorpus { start, end } => corpus(g, &loaded, out, start, end),
        Command::Sft { corpus } => sft(&loaded, out, &corpus),
        Command::Train { init } => train(&loaded, out, init.as_deref()),
        Command::Eval { traces, baseline } => eval(&loaded, out, &traces, &baseline),
        Command::Audit { traces } => audit(&loaded, out, &traces),
        Command::Sweep { seeds } => run_sweep(&loaded, out, seeds),
    }
}

/// Files written by one command; the manifest lists them with the config hash.
struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn finish(mut self, command: &str, cfg: &ExperimentConfig, extra: serde_json::Value) -> Result<()> {
        self.write("config.json", &serde_json::to_string_pretty(cfg)?)?;
        let manifest = json!({
            "command": command,
            "config_hash": cfg.hash(),
            "seed": cfg.train.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "files": self.files,
            "details": extra,
        });
        fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

fn resolve_policy(name: &str) -> Result<Controller> {
    if let Some(c) = Controller::from_name(name) {
        return Ok(c);
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "unknown policy `{name}`: expected never-ask, always-ask, oracle or a checkpoint path"
        )));
    }
    Ok(Controller::Greedy(load_checkpoint(path)?))
}

fn load_checkpoint(path: &Path) -> Result<PolicyParams> {
    let text = fs::read_to_string(path)?;
    Ok(Checkpoint::from_json(&text)?.into_params()?)
}

fn load_traces(path: &Path) -> Result<Vec<Trajectory>> {
    Ok(read_traces(BufReader::new(File::open(path)?))?)
}

fn gateway_err(e: agentask_gateway::GatewayError) -> CoreError {
    CoreError::Data(format!("gateway: {e}"))
}

fn simulate(g: &Global, l: &Loaded, mut out: Output, episodes: Option<u64>, start: Option<u64>) -> Result<()> {
    let cfg = &l.experiment;
    let env = Environment::new(cfg.env.clone())?;
    let start = start.unwrap_or(cfg.eval_seed_start);
    let seeds: Vec<u64> = (start..start + episodes.unwrap_or(cfg.eval_episodes)).collect();
    let (traces, policy) = if g.gateway {
        let clarifier = LlmClarifier::new(l.gateway.clone());
        let mut log = WireLog::new(out.create("wire.jsonl")?);
        let mut traces = Vec::with_capacity(seeds.len());
        // sequential: one writer for the wire log
        for &s in &seeds {
            let t = run_episode_with(&env, s, &cfg.rewards, |state| {
                if state.budget_remaining < ask_cost_bound() {
                    return Ok(Action::none());
                }
                let (reply, _) = clarifier.decide(state, Some(&mut log)).map_err(gateway_err)?;
                Ok(reply.parsed.unwrap_or_else(Action::none))
            })?;
            traces.push(t);
        }
        log.into_inner().flush()?;
        (traces, "gateway".to_string())
    } else {
        let controller = resolve_policy(&g.policy)?;
        (rollout_many(&env, &seeds, &controller, &cfg.rewards, cfg.train.seed)?, g.policy.clone())
    };
    let mut w = out.create("traces.jsonl")?;
    write_traces(&mut w, &traces)?;
    w.flush()?;
    let asks: usize = traces.iter().map(Trajectory::asks).sum();
    println!("simulated {} episodes under {policy}: {asks} asks", traces.len());
    out.finish("simulate", cfg, json!({"policy": policy, "episodes": traces.len(), "first_seed": start}))
}

fn corpus(g: &Global, l: &Loaded, mut out: Output, start: Option<u64>, end: Option<u64>) -> Result<()> {
    let cfg = &l.experiment;
    let env = Environment::new(cfg.env.clone())?;
    let seeds = start.unwrap_or(cfg.corpus_seeds.0)..end.unwrap_or(cfg.corpus_seeds.1);
    if seeds.is_empty() {
        return Err(CliError::Usage(format!("empty corpus seed range {seeds:?}")));
    }
    let corpus = if g.gateway {
        let judge = LlmClarifier::new(l.gateway.clone());
        build_corpus(&env, seeds.clone(), |s| judge.label(s, None::<&mut WireLog<std::io::Sink>>).map_err(gateway_err))?
    } else {
        build_sim_corpus(&env, seeds.clone())?
    };
    let mut w = out.create("corpus.jsonl")?;
    corpus.write(&mut w)?;
    w.flush()?;
    let counts = corpus.label_counts();
    println!(
        "{} examples from seeds {}..{} (DG {}, RD {}, SC {}, CG {}, NONE {}; {} skipped)",
        corpus.examples.len(),
        seeds.start,
        seeds.end,
        counts[0],
        counts[1],
        counts[2],
        counts[3],
        counts[4],
        corpus.provenance.skipped
    );
    out.finish(
        "build-corpus",
        cfg,
        json!({"teacher": if g.gateway { "gateway" } else { "simulator" }, "corpus_hash": corpus.hash()}),
    )
}

fn sft(l: &Loaded, mut out: Output, path: &Path) -> Result<()> {
    let cfg = &l.experiment;
    let corpus = Corpus::read(BufReader::new(File::open(path)?))?;
    let outcome = train_sft(&corpus, &SftConfig { features: cfg.features(), ..cfg.sft.clone() })?;
    out.write("policy.json", &Checkpoint::new(&outcome.params, cfg.hash()).to_json())?;
    let mut log = csv::Writer::from_writer(out.create("sft_log.csv")?);
    log.write_record(["epoch", "train_loss", "heldout_loss"])?;
    for e in &outcome.log {
        log.write_record([e.epoch.to_string(), e.train_loss.to_string(), e.heldout_loss.to_string()])?;
    }
    log.flush()?;
    println!("best epoch {} of {}", outcome.best_epoch, outcome.log.len());
    out.finish("sft", cfg, json!({"corpus_hash": corpus.hash(), "best_epoch": outcome.best_epoch}))
}

fn train(l: &Loaded, mut out: Output, init: Option<&Path>) -> Result<()> {
    let cfg = &l.experiment;
    let init = match init {
        Some(p) => load_checkpoint(p)?,
        None => PolicyParams::zeros(cfg.features()),
    };
    if init.features != cfg.features() {
        return Err(CoreError::Data("initial checkpoint feature layout differs from the config".into()).into());
    }
    let outcome = run_rl(cfg, &init)?;
    out.write("policy.json", &Checkpoint::new(&outcome.params, cfg.hash()).to_json())?;
    let mut body = String::from(METRICS_HEADER);
    body.push('\n');
    for m in &outcome.metrics {
        body.push_str(&m.csv_row());
        body.push('\n');
    }
    out.write("metrics.csv", &body)?;
    if let Some(last) = outcome.metrics.last() {
        println!("iteration {}: mean_s {:.3}, asks/episode {:.3}", last.iteration, last.mean_s, last.asks_per_episode);
    }
    out.finish("train", cfg, json!({"iterations": outcome.metrics.len(), "baseline": outcome.baseline}))
}

fn eval(l: &Loaded, mut out: Output, traces: &Path, baseline: &Path) -> Result<()> {
    let (t, b) = (load_traces(traces)?, load_traces(baseline)?);
    let overhead = overhead_metrics(&t, &b)?;
    let dist = annotate_distribution(&t);
    let report = text_report(&dist, &one_shot_resolution(&t), Some(&overhead));
    out.write("overhead.csv", &overhead_csv(&overhead))?;
    out.write("distribution.csv", &distribution_csv(&dist))?;
    out.write("report.txt", &report)?;
    print!("{report}");
    out.finish("eval", &l.experiment, json!({"traces": traces, "baseline": baseline}))
}

fn audit(l: &Loaded, mut out: Output, traces: &Path) -> Result<()> {
    let t = load_traces(traces)?;
    let dist = annotate_distribution(&t);
    let one_shot = one_shot_resolution(&t);
    let report = text_report(&dist, &one_shot, None);
    out.write("distribution.csv", &distribution_csv(&dist))?;
    out.write("one_shot.csv", &one_shot_csv(&one_shot))?;
    out.write("report.txt", &report)?;
    print!("{report}");
    out.finish("audit", &l.experiment, json!({"traces": traces}))
}

fn run_sweep(l: &Loaded, mut out: Output, n_seeds: u64) -> Result<()> {
    if n_seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let cfg = &l.experiment;
    let lambdas: Vec<Exact> = SWEEP_LAMBDAS.iter().map(|s| s.parse().expect("grid literal")).collect();
    let base = cfg.train.seed;
    let seeds: Vec<u64> = (base..base + n_seeds).collect();
    let rows = sweep(cfg, &lambdas, &SWEEP_WINDOWS, &seeds)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| CliError::Io(e.into_error()))?)
        .expect("csv output is utf-8");
    out.write("sweep.csv", &body)?;
    print!("{body}");
    out.finish("sweep", cfg, json!({"seeds": seeds}))
}
