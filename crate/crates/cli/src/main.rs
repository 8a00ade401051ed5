mod commands;
mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Simplex-valued graph embeddings: training, evaluation and exports.
#[derive(Debug, Parser)]
#[command(name = "compograph", version)]
struct Cli {
    /// Optional TOML file with [train], [eval] and [synth] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on a full edge list and write a checkpoint.
    Train(commands::TrainCmd),
    /// Link prediction over held-out edges, per dimension and seed.
    Linkpred(commands::LinkpredCmd),
    /// Node classification with a logistic-regression probe on embeddings.
    Nodeclass(commands::NodeclassCmd),
    /// Link prediction after discarding simplex components.
    Subcomp(commands::SubcompCmd),
    /// Synthetic membership recovery.
    Synth(commands::SynthCmd),
    /// Single-balance probes, loadings and coordinate tables.
    Probe(commands::ProbeCmd),
    /// Paired log-ratio trade-off path for one node.
    Trajectory(commands::TrajectoryCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    Helmert,
    Learned,
}

/// Training flags shared by every command that fits a model.
#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Number of simplex components (embedding dimension K-1).
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long = "iters")]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Negatives per iteration as a multiple of the edge count.
    #[arg(long)]
    pub neg_ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub basis: Option<BasisArg>,
    /// Print the objective estimate every N iterations (0 = never).
    #[arg(long)]
    pub log_every: Option<usize>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err
        .chain()
        .filter_map(|e| e.downcast_ref::<compograph::Error>())
        .any(compograph::Error::is_numeric);
    if numeric {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = config::FileConfig::load(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Train(c) => c.run(&file),
        Command::Linkpred(c) => c.run(&file),
        Command::Nodeclass(c) => c.run(&file),
        Command::Subcomp(c) => c.run(&file),
        Command::Synth(c) => c.run(&file),
        Command::Probe(c) => c.run(&file),
        Command::Trajectory(c) => c.run(&file),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
