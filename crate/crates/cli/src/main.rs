//! `swindqn`: train, evaluate, inspect and export Double DQN runs.

mod export;
mod inspect;
mod pgm;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "swindqn", version, about = "Double DQN with Swin-MLP and CNN backbones")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every command that builds a configuration.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `cnn` or `swin`.
    #[arg(long)]
    pub backbone: Option<String>,
    /// `spatial_mlp` or `attention`.
    #[arg(long)]
    pub mixer: Option<String>,
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_frames: Option<u64>,
    /// Extra `key=value` override; repeatable. Applied after every other flag.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent, writing evaluation CSVs, logs and checkpoints.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run directory (default: `$SWINDQN_OUT_DIR/<backbone>-<env>-s<seed>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Address of a remote environment server.
        #[arg(long)]
        remote: Option<String>,
    },
    /// Evaluate a checkpoint and append the result to a CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Environment name (default: the one the checkpoint was trained on).
        #[arg(long)]
        env: Option<String>,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        /// Evaluation seed (default: the run's seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for `evaluations.csv` (default: next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        remote: Option<String>,
    },
    /// Write per-stage activation heatmaps and Q-values for one state.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        /// 84×84 binary PGM frames, oldest first; fewer than four are padded
        /// by repeating the first. Without frames the state comes from the
        /// environment.
        #[arg(long = "frame")]
        frames: Vec<PathBuf>,
        /// Environment seed for the generated state.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Greedy steps to play before capturing the generated state.
        #[arg(long, default_value_t = 0)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn one or more run directories into curve, AUC and profile tables.
    Export {
        /// Run directory holding `eval.csv`, or a directory of such runs.
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        /// Output directory (default: the first run directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// AUC reference score (default: the task's human score).
        #[arg(long)]
        reference: Option<f64>,
    },
    /// Serve an environment over TCP.
    ServeEnv {
        #[arg(long, default_value = "catch")]
        env: String,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Stop after this many connections.
        #[arg(long)]
        max_connections: Option<usize>,
    },
    /// Print the resolved configuration.
    Config {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out, remote } => run::train(&config, out, remote),
        Command::Eval { checkpoint, env, episodes, seed, out, remote } => {
            run::eval(&checkpoint, env, episodes, seed, out, remote)
        }
        Command::Inspect { checkpoint, frames, seed, steps, out } => {
            inspect::inspect(&checkpoint, &frames, seed, steps, &out)
        }
        Command::Export { runs, out, reference } => export::export(&runs, out, reference),
        Command::ServeEnv { env, listen, max_connections } => run::serve_env(&env, &listen, max_connections),
        Command::Config { config } => run::resolve_config(&config).map(|cfg| print!("{}", cfg.to_text())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
