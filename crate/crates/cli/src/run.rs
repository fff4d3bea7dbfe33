//! Configuration resolution and the `train`, `eval` and `serve-env` commands.

use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swindqn_core::agent::{epsilon_at, train as train_loop, Agent, EpisodeLog, Flow, TrainObserver};
use swindqn_core::checkpoint::{unix_now, Checkpoint, RunManifest};
use swindqn_core::config::ExperimentConfig;
use swindqn_core::env::remote::serve;
use swindqn_core::env::{make_emulator, EnvSource, PixelEnv};
use swindqn_core::metrics::{evaluate_parallel, EvalRecord, EvalSettings};
use swindqn_core::persist::write_atomic;
use swindqn_core::qnet::{Backbone, QNetwork};
use swindqn_core::replay::ReplayBuffer;
use swindqn_core::{Error, Result};

use crate::ConfigArgs;

pub const EVAL_CSV: &str = "eval.csv";
pub const TRAIN_LOG_CSV: &str = "train_log.csv";
pub const CHECKPOINT: &str = "checkpoint.ckpt";
pub const MANIFEST: &str = "manifest.txt";
pub const EVALUATIONS_CSV: &str = "evaluations.csv";

/// Defaults, then the config file, then named flags, then `--set` pairs.
pub fn resolve_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    let named = [
        ("backbone", args.backbone.clone()),
        ("mixer", args.mixer.clone()),
        ("env", args.env.clone()),
        ("seed", args.seed.map(|v| v.to_string())),
        ("max_frames", args.max_frames.map(|v| v.to_string())),
    ];
    for (key, value) in named {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for pair in &args.set {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{pair}` is not of the form key=value")))?;
        cfg.set(key.trim(), value)?;
    }
    Ok(cfg)
}

/// Evaluation protocol shared by in-training evaluation and `eval`, so a
/// saved checkpoint reproduces the in-training score.
pub fn eval_settings(cfg: &ExperimentConfig, episodes: usize, seed: u64) -> EvalSettings {
    EvalSettings {
        episodes,
        epsilon: cfg.train.eval_epsilon,
        noop_max: cfg.train.noop_max,
        max_episode_frames: cfg.train.max_episode_frames,
        seed,
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn default_run_dir(cfg: &ExperimentConfig) -> PathBuf {
    let root = std::env::var_os("SWINDQN_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    root.join(format!("{}-{}-s{}", cfg.backbone, cfg.env, cfg.seed))
}

fn csv(header: &str, rows: &[String]) -> String {
    let mut out = String::with_capacity(header.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>());
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    out
}

/// Writes run artifacts at every evaluation point.
struct RunWriter {
    dir: PathBuf,
    manifest: RunManifest,
    source: EnvSource,
    settings: EvalSettings,
    eval_rows: Vec<String>,
    log_rows: Vec<String>,
    started: Instant,
}

impl RunWriter {
    fn flush(&mut self, agent: &Agent<Backbone<f32>>) -> Result<()> {
        write_atomic(&self.dir.join(EVAL_CSV), csv(EvalRecord::CSV_HEADER, &self.eval_rows).as_bytes())?;
        write_atomic(&self.dir.join(TRAIN_LOG_CSV), csv(EpisodeLog::CSV_HEADER, &self.log_rows).as_bytes())?;
        self.manifest.saved_unix = unix_now();
        Checkpoint::from_agent(agent, self.manifest.clone()).save(&self.dir.join(CHECKPOINT))?;
        write_atomic(&self.dir.join(MANIFEST), self.manifest.to_text().as_bytes())
    }
}

impl TrainObserver<Backbone<f32>> for RunWriter {
    fn on_episode(&mut self, log: &EpisodeLog) -> Result<()> {
        self.log_rows.push(log.csv_row());
        Ok(())
    }

    fn on_eval(&mut self, agent: &Agent<Backbone<f32>>) -> Result<Flow> {
        let workers = if self.source.remote.is_some() { 1 } else { workers() };
        let scores = evaluate_parallel(agent.policy(), || self.source.open(), &self.settings, workers)?;
        let record = EvalRecord::from_scores(agent.steps, agent.frames, scores, agent.epsilon())?;
        eprintln!(
            "frames {:>9}  eval mean {:>8.3} ± {:.3}  epsilon {:.3}  elapsed {:.0?}",
            record.frames,
            record.mean,
            record.std,
            record.epsilon,
            self.started.elapsed()
        );
        self.eval_rows.push(record.csv_row());
        self.flush(agent)?;
        Ok(Flow::Continue)
    }
}

/// Builds a fresh agent the same way for every entry point.
pub fn new_agent(cfg: &ExperimentConfig, num_actions: usize) -> Result<Agent<Backbone<f32>>> {
    let net = Backbone::build(cfg, num_actions, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    Agent::new(net, cfg.train.clone(), cfg.seed)
}

pub fn train(args: &ConfigArgs, out: Option<PathBuf>, remote: Option<String>) -> Result<()> {
    let cfg = resolve_config(args)?;
    let source = EnvSource { name: cfg.env.clone(), remote };
    let actions = source.num_actions()?;
    cfg.clone().with_num_actions(actions).validate()?;
    let dir = out.unwrap_or_else(|| default_run_dir(&cfg));
    fs::create_dir_all(&dir)?;
    let manifest = RunManifest::new(cfg.clone());
    write_atomic(&dir.join(MANIFEST), manifest.to_text().as_bytes())?;

    let mut agent = new_agent(&cfg, actions)?;
    let mut env = PixelEnv::new(source.open()?, cfg.train.noop_max)?;
    let mut replay = ReplayBuffer::new(cfg.train.replay_size);
    let mut writer = RunWriter {
        dir: dir.clone(),
        manifest,
        settings: eval_settings(&cfg, cfg.train.eval_episodes, cfg.seed),
        source,
        eval_rows: Vec::new(),
        log_rows: Vec::new(),
        started: Instant::now(),
    };
    eprintln!("training {} on {} into {}", cfg.backbone, cfg.env, dir.display());
    train_loop(&mut agent, &mut env, &mut replay, &mut writer)?;
    writer.flush(&agent)?;
    eprintln!("done: {} frames, {} updates", agent.frames, agent.updates);
    Ok(())
}

fn append_row(path: &Path, row: &str) -> Result<()> {
    let mut text = match fs::read_to_string(path) {
        Ok(t) if t.lines().next() == Some(EvalRecord::CSV_HEADER) => t,
        Ok(_) => return Err(Error::Metric(format!("{} exists but is not an evaluation CSV", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => format!("{}\n", EvalRecord::CSV_HEADER),
        Err(e) => return Err(e.into()),
    };
    text.push_str(row);
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn eval(
    checkpoint: &Path,
    env: Option<String>,
    episodes: usize,
    seed: Option<u64>,
    out: Option<PathBuf>,
    remote: Option<String>,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let cfg = &ckpt.manifest.config;
    let net = ckpt.policy_network()?;
    let source = EnvSource { name: env.unwrap_or_else(|| cfg.env.clone()), remote };
    if source.num_actions()? != net.num_actions() {
        return Err(Error::Config(format!(
            "checkpoint has {} actions, environment `{}` has {}",
            net.num_actions(),
            source.name,
            source.num_actions()?
        )));
    }
    let settings = eval_settings(cfg, episodes, seed.unwrap_or(cfg.seed));
    let workers = if source.remote.is_some() { 1 } else { workers() };
    let scores = evaluate_parallel(&net, || source.open(), &settings, workers)?;
    let frames = ckpt.frames;
    let record =
        EvalRecord::from_scores(frames / cfg.train.frames_per_step, frames, scores, epsilon_at(frames, &cfg.train))?;
    println!(
        "{}: {} episodes, mean {}, std {}, min {}, max {}",
        checkpoint.display(),
        episodes,
        record.mean,
        record.std,
        record.min,
        record.max
    );
    let dir = out.unwrap_or_else(|| checkpoint.parent().map(Path::to_path_buf).unwrap_or_default());
    append_row(&dir.join(EVALUATIONS_CSV), &record.csv_row())
}

pub fn serve_env(env: &str, listen: &str, max_connections: Option<usize>) -> Result<()> {
    make_emulator(env)?;
    let listener = TcpListener::bind(listen)?;
    eprintln!("serving `{env}` on {}", listener.local_addr()?);
    let name = env.to_string();
    serve(&listener, move || make_emulator(&name).expect("environment name checked above"), max_connections)
}
