//! Double DQN agent: ε-greedy acting, double-Q targets, Smooth L1 updates,
//! periodic target synchronization and the training loop.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swindqn_tensor::{argmax, no_grad, smooth_l1, AdamConfig, AdamState, Tensor};

use crate::config::TrainConfig;
use crate::env::{clip_reward, Emulator, FrameStack, PixelEnv, RewardMode, STACK};
use crate::error::{Error, Result};
use crate::qnet::{Mode, QNetwork};
use crate::replay::{Batch, ReplayBuffer, Transition};

/// Linear decay from `eps_initial` at frame 0 to `eps_final` at
/// `eps_decay_frames`, constant afterwards.
pub fn epsilon_at(frame: u64, cfg: &TrainConfig) -> f64 {
    if cfg.eps_decay_frames == 0 || frame >= cfg.eps_decay_frames {
        return cfg.eps_final;
    }
    let t = frame as f64 / cfg.eps_decay_frames as f64;
    cfg.eps_initial + t * (cfg.eps_final - cfg.eps_initial)
}

/// ε-greedy choice: a uniform action with probability `eps`, otherwise the
/// lowest-index maximizer of `q()`. `q` is only evaluated when needed.
pub fn select_action(
    num_actions: usize,
    eps: f64,
    rng: &mut dyn RngCore,
    q: impl FnOnce() -> Result<Vec<f32>>,
) -> Result<usize> {
    if rng.gen::<f64>() < eps {
        return Ok(rng.gen_range(0..num_actions));
    }
    Ok(argmax(&q()?))
}

/// Double-Q targets from next-state values: `r` for terminal transitions,
/// otherwise `r + γ·Q^B(s′, argmax_a Q^A(s′, a))`.
pub fn double_q_targets(
    rewards: &[f32],
    terminals: &[bool],
    qa_next: &[f32],
    qb_next: &[f32],
    num_actions: usize,
    gamma: f64,
) -> Vec<f32> {
    let gamma = gamma as f32;
    rewards
        .iter()
        .zip(terminals)
        .enumerate()
        .map(|(i, (&r, &terminal))| {
            if terminal {
                return r;
            }
            let row = i * num_actions..(i + 1) * num_actions;
            let a_star = argmax(&qa_next[row.clone()]);
            let target = r + gamma * qb_next[row.start + a_star];
            debug_assert!({
                let bound = r + gamma * qb_next[row].iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                target <= bound
            });
            target
        })
        .collect()
}

fn batch_tensor(data: &[f32], len: usize) -> Result<Tensor<f32>> {
    Ok(Tensor::from_vec(data.to_vec(), &[len, STACK, 84, 84])?)
}

/// Targets for a sampled batch. Both networks run in inference mode and no
/// graph is recorded.
pub fn compute_target<N: QNetwork<f32>>(batch: &Batch, qa: &N, qb: &N, gamma: f64) -> Result<Vec<f32>> {
    no_grad(|| {
        let next = batch_tensor(&batch.next_states, batch.len)?;
        let qa_next = qa.forward(&next, Mode::Eval)?.to_vec();
        let qb_next = qb.forward(&next, Mode::Eval)?.to_vec();
        Ok(double_q_targets(&batch.rewards, &batch.terminals, &qa_next, &qb_next, qa.num_actions(), gamma))
    })
}

/// Greedy Q-values of one stacked state.
pub fn q_values<N: QNetwork<f32>>(net: &N, state: &FrameStack) -> Result<Vec<f32>> {
    no_grad(|| {
        let x = Tensor::from_vec(state.to_normalized(), &[1, STACK, 84, 84])?;
        Ok(net.forward(&x, Mode::Eval)?.to_vec())
    })
}

/// Independent random streams derived from one seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const STREAM_ACTION: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_DROP_PATH: u64 = 3;
const STREAM_ENV: u64 = 4;

/// Policy network `Q^A`, target network `Q^B`, optimizer, counters and
/// random streams.
pub struct Agent<N: QNetwork<f32>> {
    pub cfg: TrainConfig,
    policy: N,
    target: N,
    params: Vec<Tensor<f32>>,
    optim: AdamState<f32>,
    /// Agent-level frame counter (four per step).
    pub frames: u64,
    pub steps: u64,
    pub updates: u64,
    pub syncs: u64,
    pub episodes: u64,
    action_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    drop_rng: ChaCha8Rng,
    env_rng: ChaCha8Rng,
}

impl<N: QNetwork<f32>> Agent<N> {
    pub fn new(policy: N, cfg: TrainConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let target = policy.frozen_copy();
        let params: Vec<_> = policy.parameters().into_iter().map(|(_, t)| t).collect();
        let adam = AdamConfig { learning_rate: cfg.lr, epsilon: cfg.adam_epsilon, ..AdamConfig::default() };
        let optim = AdamState::new(adam, &params);
        Ok(Agent {
            cfg,
            policy,
            target,
            params,
            optim,
            frames: 0,
            steps: 0,
            updates: 0,
            syncs: 0,
            episodes: 0,
            action_rng: stream(seed, STREAM_ACTION),
            sample_rng: stream(seed, STREAM_SAMPLE),
            drop_rng: stream(seed, STREAM_DROP_PATH),
            env_rng: stream(seed, STREAM_ENV),
        })
    }

    pub fn policy(&self) -> &N {
        &self.policy
    }

    pub fn target(&self) -> &N {
        &self.target
    }

    pub fn optimizer(&self) -> &AdamState<f32> {
        &self.optim
    }

    pub fn optimizer_mut(&mut self) -> &mut AdamState<f32> {
        &mut self.optim
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_at(self.frames, &self.cfg)
    }

    /// ε-greedy action for `state` at the current exploration rate.
    pub fn act(&mut self, state: &FrameStack) -> Result<usize> {
        let eps = self.epsilon();
        let policy = &self.policy;
        select_action(policy.num_actions(), eps, &mut self.action_rng, || q_values(policy, state))
    }

    /// One gradient step on `batch`; returns the loss.
    pub fn update_step(&mut self, batch: &Batch) -> Result<f32> {
        let targets = compute_target(batch, &self.policy, &self.target, self.cfg.gamma)?;
        for p in &self.params {
            p.zero_grad();
        }
        let states = batch_tensor(&batch.states, batch.len)?;
        let q = self.policy.forward(&states, Mode::Train(&mut self.drop_rng))?;
        let q_sa = q.gather_last(&batch.actions)?;
        let target = Tensor::from_vec(targets, &[batch.len])?;
        let loss = smooth_l1(&q_sa, &target)?;
        loss.backward()?;
        self.optim.step(&self.params)?;
        self.updates += 1;
        Ok(loss.item())
    }

    /// `Q^B ← Q^A`. Buffers are shared copy-on-write, so later policy
    /// updates never reach the target.
    pub fn sync_target(&mut self) -> Result<()> {
        for ((_, t), (_, p)) in self.target.parameters().iter().zip(self.policy.parameters().iter()) {
            t.assign(p)?;
        }
        self.syncs += 1;
        Ok(())
    }

    /// Restores counters after loading a checkpoint.
    pub fn set_frames(&mut self, frames: u64) {
        self.frames = frames;
        self.steps = frames / self.cfg.frames_per_step;
    }
}

/// One finished (or truncated) training episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub episode: u64,
    pub step: u64,
    pub frames: u64,
    pub length: u64,
    /// Raw, unclipped return.
    pub episode_return: f64,
    /// Mean loss over the episode's updates, if any happened.
    pub mean_loss: Option<f64>,
    pub epsilon: f64,
}

impl EpisodeLog {
    pub const CSV_HEADER: &'static str = "episode,step,frames,length,return,mean_loss,epsilon";

    pub fn csv_row(&self) -> String {
        let loss = self.mean_loss.map(|l| l.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.episode, self.step, self.frames, self.length, self.episode_return, loss, self.epsilon
        )
    }
}

/// Whether training should go on after a callback.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Callbacks invoked by [`train`].
pub trait TrainObserver<N: QNetwork<f32>> {
    fn on_episode(&mut self, _log: &EpisodeLog) -> Result<()> {
        Ok(())
    }

    /// Called every `steps_per_eval` agent steps.
    fn on_eval(&mut self, _agent: &Agent<N>) -> Result<Flow> {
        Ok(Flow::Continue)
    }
}

/// Collects episode logs and ignores evaluation points.
#[derive(Default)]
pub struct LogCollector {
    pub episodes: Vec<EpisodeLog>,
}

impl<N: QNetwork<f32>> TrainObserver<N> for LogCollector {
    fn on_episode(&mut self, log: &EpisodeLog) -> Result<()> {
        self.episodes.push(log.clone());
        Ok(())
    }
}

/// The training loop: act every step, store every step, update every
/// `steps_per_update` steps once the warm-up is met, sync every
/// `sync_frames` frames and call the evaluation hook every
/// `steps_per_eval` steps, until `max_frames`.
pub fn train<N: QNetwork<f32>, E: Emulator>(
    agent: &mut Agent<N>,
    env: &mut PixelEnv<E>,
    replay: &mut ReplayBuffer,
    observer: &mut dyn TrainObserver<N>,
) -> Result<()> {
    let cfg = agent.cfg.clone();
    if env.num_actions() != agent.policy.num_actions() {
        return Err(Error::Config(format!(
            "environment has {} actions, network {}",
            env.num_actions(),
            agent.policy.num_actions()
        )));
    }
    let warmup = cfg.warmup_transitions().max(cfg.batch);
    while agent.frames < cfg.max_frames {
        let seed = agent.env_rng.gen::<u32>();
        let mut state = env.reset(seed, &mut agent.env_rng)?;
        let start_step = agent.steps;
        let mut episode_return = 0.0f64;
        let mut losses = Vec::new();
        let mut stop = false;
        loop {
            let action = agent.act(&state)?;
            let out = env.step(action)?;
            episode_return += f64::from(out.reward);
            replay.push(Transition {
                state,
                action,
                reward: clip_reward(out.reward, RewardMode::Train),
                next_state: out.state.clone(),
                terminal: out.terminal,
            });
            state = out.state;
            agent.frames += cfg.frames_per_step;
            agent.steps += 1;

            if agent.steps.is_multiple_of(cfg.steps_per_update) && replay.len() >= warmup {
                let batch = replay.sample(cfg.batch, &mut agent.sample_rng).expect("warm-up guarantees a batch");
                losses.push(f64::from(agent.update_step(&batch)?));
            }
            if agent.frames.is_multiple_of(cfg.sync_frames) {
                agent.sync_target()?;
            }
            if agent.steps.is_multiple_of(cfg.steps_per_eval) && observer.on_eval(agent)? == Flow::Stop {
                stop = true;
            }
            let episode_frames = (agent.steps - start_step) * cfg.frames_per_step;
            if out.terminal || stop || agent.frames >= cfg.max_frames || episode_frames >= cfg.max_episode_frames {
                break;
            }
        }
        agent.episodes += 1;
        observer.on_episode(&EpisodeLog {
            episode: agent.episodes,
            step: agent.steps,
            frames: agent.frames,
            length: agent.steps - start_step,
            episode_return,
            mean_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            epsilon: agent.epsilon(),
        })?;
        if stop {
            break;
        }
    }
    Ok(())
}
