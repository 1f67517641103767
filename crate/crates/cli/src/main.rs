//! `agentask`: simulate, build a corpus, train, evaluate and audit edge
//! clarification policies from one config file.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "agentask", version, about = "Edge-level clarification controller for multi-agent pipelines")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// JSON config with one section per module (env, rewards, sft, train, gateway).
    #[arg(long, global = true, env = "AGENTASK_CONFIG")]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.lr=0.1`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Experiment seed applied to the environment and both training stages.
    #[arg(long, global = true, env = "AGENTASK_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "AGENTASK_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Rollout worker threads; defaults to host parallelism.
    #[arg(long, global = true, env = "AGENTASK_WORKERS")]
    pub workers: Option<usize>,
    /// `never-ask`, `always-ask`, `oracle`, or a checkpoint path.
    #[arg(long, global = true, env = "AGENTASK_POLICY", default_value = "never-ask")]
    pub policy: String,
    /// Route clarifier or teacher calls to the configured chat endpoint.
    #[arg(long, global = true, env = "AGENTASK_GATEWAY")]
    pub gateway: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Roll out episodes under a policy and write their traces.
    Simulate {
        #[arg(long)]
        episodes: Option<u64>,
        /// First episode seed; defaults to the evaluation range.
        #[arg(long)]
        start: Option<u64>,
    },
    /// Label simulator edges with the teacher and write a corpus.
    BuildCorpus {
        #[arg(long)]
        start: Option<u64>,
        #[arg(long)]
        end: Option<u64>,
    },
    /// Supervised warm start from a corpus.
    Sft {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// E-GRPO fine-tuning from a checkpoint (or zero init).
    Train {
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Overhead and fault distribution of traces against a baseline.
    Eval {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
    },
    /// Fault distribution and one-shot resolution of traces.
    Audit {
        #[arg(long)]
        traces: PathBuf,
    },
    /// Parsimony weight by window grid, one CSV row per cell.
    Sweep {
        /// Number of seeds averaged per cell.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
