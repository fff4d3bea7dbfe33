//! `inspect`: activation heatmaps and Q-values for a single state.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swindqn_core::agent::q_values;
use swindqn_core::checkpoint::Checkpoint;
use swindqn_core::env::{make_emulator, Frame, FrameStack, PixelEnv, FRAME_SIZE, STACK};
use swindqn_core::persist::write_atomic;
use swindqn_core::qnet::{Mode, QNetwork};
use swindqn_core::{Error, Result};
use swindqn_tensor::{argmax, no_grad, Tensor};

use crate::pgm;

fn load_frames(paths: &[PathBuf]) -> Result<FrameStack> {
    if paths.len() > STACK {
        return Err(Error::Config(format!("at most {STACK} frames can be stacked, got {}", paths.len())));
    }
    let mut frames: Vec<Frame> = Vec::with_capacity(STACK);
    for p in paths {
        let (w, h, px) = pgm::decode(&std::fs::read(p)?)?;
        if (w, h) != (FRAME_SIZE, FRAME_SIZE) {
            return Err(Error::Config(format!(
                "{}: frames must be {FRAME_SIZE}×{FRAME_SIZE}, got {w}×{h}",
                p.display()
            )));
        }
        frames.push(Arc::from(px));
    }
    while frames.len() < STACK {
        frames.insert(0, frames[0].clone());
    }
    Ok(FrameStack(frames.try_into().expect("exactly four frames")))
}

/// Plays `steps` greedy steps from a seeded reset and returns the state.
fn generated_state<N: QNetwork<f32>>(
    net: &N,
    env_name: &str,
    noop_max: u32,
    seed: u64,
    steps: usize,
) -> Result<FrameStack> {
    let mut env = PixelEnv::new(make_emulator(env_name)?, noop_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.reset(seed as u32, &mut rng)?;
    for _ in 0..steps {
        if env.is_terminal() {
            break;
        }
        state = env.step(argmax(&q_values(net, &state)?))?.state;
    }
    Ok(state)
}

/// Per-position mean absolute activation of a `[1, H, W, C]` grid, scaled to
/// the full 8-bit range.
fn heatmap(grid: &Tensor<f32>) -> (usize, usize, Vec<u8>) {
    let (h, w, c) = (grid.shape()[1], grid.shape()[2], grid.shape()[3]);
    let v = grid.to_vec();
    let mag: Vec<f32> = v.chunks_exact(c).map(|px| px.iter().map(|a| a.abs()).sum::<f32>() / c as f32).collect();
    let lo = mag.iter().cloned().fold(f32::INFINITY, f32::min);
    let hi = mag.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    (w, h, mag.iter().map(|m| ((m - lo) * scale).round() as u8).collect())
}

pub fn inspect(checkpoint: &Path, frames: &[PathBuf], seed: u64, steps: usize, out: &Path) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let cfg = &ckpt.manifest.config;
    let net = ckpt.policy_network()?;
    let state = if frames.is_empty() {
        generated_state(&net, &cfg.env, cfg.train.noop_max, seed, steps)?
    } else {
        load_frames(frames)?
    };
    let staged = no_grad(|| {
        let x = Tensor::from_vec(state.to_normalized(), &[1, STACK, FRAME_SIZE, FRAME_SIZE])?;
        net.forward_staged(&x, Mode::Eval)
    })?;

    // Render everything first so a failure leaves no partial output.
    let mut files = vec![(out.join("input.pgm"), pgm::encode(FRAME_SIZE, FRAME_SIZE, state.newest()))];
    for (i, grid) in staged.stages.iter().enumerate() {
        let (w, h, px) = heatmap(grid);
        files.push((out.join(format!("stage{}.pgm", i + 1)), pgm::encode(w, h, &px)));
    }
    let mut q = String::from("action,q\n");
    for (a, v) in staged.q.to_vec().iter().enumerate() {
        writeln!(q, "{a},{v}").expect("writing to a String");
    }
    files.push((out.join("q_values.csv"), q.into_bytes()));
    for (path, bytes) in &files {
        write_atomic(path, bytes)?;
    }
    println!("wrote {} stage heatmaps and {} Q-values to {}", staged.stages.len(), net.num_actions(), out.display());
    Ok(())
}
