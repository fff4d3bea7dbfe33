//! Small configurations shared by the integration tests.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swindqn_core::config::{BackboneKind, ConvSpec, ExperimentConfig, TrainConfig};
use swindqn_core::env::{FrameStack, FRAME_PIXELS};
use swindqn_core::qnet::Backbone;
use swindqn_core::replay::Transition;

/// A narrow CNN on the full 84×84 input, cheap enough for unit-scale runs.
pub fn tiny_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { backbone: BackboneKind::Cnn, seed, ..ExperimentConfig::default() };
    cfg.cnn.convs = [
        ConvSpec { out_channels: 4, kernel: 8, stride: 4 },
        ConvSpec { out_channels: 8, kernel: 4, stride: 2 },
        ConvSpec { out_channels: 8, kernel: 3, stride: 1 },
    ];
    cfg.cnn.fc_width = 32;
    cfg.train = TrainConfig {
        eps_decay_frames: 2_000,
        sync_frames: 400,
        steps_per_eval: 250,
        max_frames: 4_000,
        replay_size: 2_000,
        lr: 1e-3,
        learning_starts: 400,
        ..TrainConfig::default()
    };
    cfg
}

pub fn tiny_network(cfg: &ExperimentConfig) -> Backbone<f32> {
    Backbone::build(cfg, 3, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap()
}

pub fn frame(v: u8) -> swindqn_core::env::Frame {
    vec![v; FRAME_PIXELS].into()
}

pub fn transition(tag: u8) -> Transition {
    Transition {
        state: FrameStack::replicated(frame(tag)),
        action: usize::from(tag % 3),
        reward: f32::from(tag),
        next_state: FrameStack::replicated(frame(tag.wrapping_add(1))),
        terminal: tag.is_multiple_of(5),
    }
}
