//! Typed hyperparameters and the `key = value` configuration format.
//!
//! Defaults mirror the published Double DQN / Swin DQN tables, except
//! `max_frames`, which defaults to a desk-scale budget.

use std::fmt;
use std::str::FromStr;

use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixerKind {
    /// Learned per-head token-mixing matrices (Swin MLP).
    SpatialMlp,
    /// Scaled dot-product attention with a relative position bias.
    WindowedAttention,
}

impl FromStr for MixerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial_mlp" => Ok(MixerKind::SpatialMlp),
            "attention" | "windowed_attention" => Ok(MixerKind::WindowedAttention),
            _ => config_err(format!("unknown mixer `{s}` (expected spatial_mlp or attention)")),
        }
    }
}

impl fmt::Display for MixerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MixerKind::SpatialMlp => "spatial_mlp",
            MixerKind::WindowedAttention => "attention",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneKind {
    Cnn,
    Swin,
}

impl FromStr for BackboneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(BackboneKind::Cnn),
            "swin" => Ok(BackboneKind::Swin),
            _ => config_err(format!("unknown backbone `{s}` (expected cnn or swin)")),
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackboneKind::Cnn => "cnn",
            BackboneKind::Swin => "swin",
        })
    }
}

/// Swin-MLP backbone hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SwinConfig {
    pub input_size: usize,
    pub in_channels: usize,
    pub blocks_per_layer: Vec<usize>,
    pub heads_per_layer: Vec<usize>,
    pub patch_size: usize,
    pub window_size: usize,
    pub embed_dim: usize,
    pub mlp_ratio: usize,
    pub drop_path_rate: f64,
    pub num_actions: usize,
    pub mixer: MixerKind,
}

impl Default for SwinConfig {
    fn default() -> Self {
        SwinConfig {
            input_size: 84,
            in_channels: 4,
            blocks_per_layer: vec![2, 3, 2],
            heads_per_layer: vec![3, 3, 6],
            patch_size: 3,
            window_size: 7,
            embed_dim: 96,
            mlp_ratio: 4,
            drop_path_rate: 0.1,
            num_actions: 3,
            mixer: MixerKind::SpatialMlp,
        }
    }
}

impl SwinConfig {
    pub fn layers(&self) -> usize {
        self.blocks_per_layer.len()
    }

    /// Channel width of stage `i` (doubles after every merge).
    pub fn stage_dim(&self, stage: usize) -> usize {
        self.embed_dim << stage
    }

    /// Token grid side of stage `i` (halves after every merge).
    pub fn stage_resolution(&self, stage: usize) -> usize {
        (self.input_size / self.patch_size) >> stage
    }

    /// `(height, width, channels)` of every stage's token grid.
    pub fn stage_geometry(&self) -> Vec<(usize, usize, usize)> {
        (0..self.layers()).map(|s| (self.stage_resolution(s), self.stage_resolution(s), self.stage_dim(s))).collect()
    }

    /// Effective window of a stage: the grid side when the grid is smaller.
    pub fn stage_window(&self, stage: usize) -> usize {
        self.window_size.min(self.stage_resolution(stage))
    }

    /// Cyclic shift of block `block` in stage `stage`: 0 for even blocks,
    /// ⌊window/2⌋ for odd ones, and 0 whenever one window covers the grid.
    pub fn block_shift(&self, stage: usize, block: usize) -> usize {
        if block.is_multiple_of(2) || self.stage_resolution(stage) <= self.window_size {
            0
        } else {
            self.window_size / 2
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers() == 0 || self.heads_per_layer.len() != self.layers() {
            return config_err(format!(
                "blocks_per_layer {:?} and heads_per_layer {:?} must be non-empty and equally long",
                self.blocks_per_layer, self.heads_per_layer
            ));
        }
        if self.patch_size == 0 || !self.input_size.is_multiple_of(self.patch_size) {
            return config_err(format!(
                "input size {} is not divisible by patch size {}",
                self.input_size, self.patch_size
            ));
        }
        if self.window_size == 0 || self.embed_dim == 0 || self.mlp_ratio == 0 || self.num_actions == 0 {
            return config_err("window_size, embed_dim, mlp_ratio and num_actions must be positive");
        }
        if !(0.0..1.0).contains(&self.drop_path_rate) {
            return config_err(format!("drop_path_rate {} must lie in [0, 1)", self.drop_path_rate));
        }
        for s in 0..self.layers() {
            let res = self.stage_resolution(s);
            if res == 0 {
                return config_err(format!("stage {s} has an empty token grid"));
            }
            if !res.is_multiple_of(self.stage_window(s)) {
                return config_err(format!(
                    "stage {s} grid {res}x{res} is not divisible by window {}",
                    self.window_size
                ));
            }
            let heads = self.heads_per_layer[s];
            if heads == 0 || !self.stage_dim(s).is_multiple_of(heads) {
                return config_err(format!("stage {s} width {} is not divisible by {heads} heads", self.stage_dim(s)));
            }
            if s + 1 < self.layers() && !res.is_multiple_of(2) {
                return config_err(format!("stage {s} grid {res}x{res} cannot be merged (odd extent)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Convolutional baseline hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnConfig {
    pub input_size: usize,
    pub in_channels: usize,
    pub convs: [ConvSpec; 3],
    pub fc_width: usize,
    pub num_actions: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            input_size: 84,
            in_channels: 4,
            convs: [
                ConvSpec { out_channels: 32, kernel: 8, stride: 4 },
                ConvSpec { out_channels: 64, kernel: 4, stride: 2 },
                ConvSpec { out_channels: 64, kernel: 3, stride: 1 },
            ],
            fc_width: 512,
            num_actions: 3,
        }
    }
}

impl CnnConfig {
    /// Spatial side after each convolution.
    pub fn spatial_sizes(&self) -> Result<Vec<usize>> {
        let mut side = self.input_size;
        let mut sizes = Vec::with_capacity(3);
        for (i, c) in self.convs.iter().enumerate() {
            if c.kernel == 0 || c.stride == 0 || c.kernel > side {
                return config_err(format!(
                    "conv {i} ({}x{} stride {}) does not fit a {side}x{side} input",
                    c.kernel, c.kernel, c.stride
                ));
            }
            side = (side - c.kernel) / c.stride + 1;
            sizes.push(side);
        }
        Ok(sizes)
    }

    pub fn flatten_len(&self) -> Result<usize> {
        let side = *self.spatial_sizes()?.last().expect("three convs");
        Ok(self.convs[2].out_channels * side * side)
    }
}

/// Training schedule and agent hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub eps_initial: f64,
    pub eps_final: f64,
    pub eps_decay_frames: u64,
    pub sync_frames: u64,
    pub frames_per_step: u64,
    pub steps_per_update: u64,
    pub steps_per_eval: u64,
    pub max_frames: u64,
    pub replay_size: usize,
    pub batch: usize,
    pub lr: f64,
    pub adam_epsilon: f64,
    /// Frames of experience collected before the first update.
    pub learning_starts: u64,
    pub eval_episodes: usize,
    pub eval_epsilon: f64,
    pub noop_max: u32,
    /// Emulator-frame cap on one episode (guards non-terminating envs).
    pub max_episode_frames: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            eps_initial: 1.0,
            eps_final: 0.01,
            eps_decay_frames: 1_000_000,
            sync_frames: 40_000,
            frames_per_step: 4,
            steps_per_update: 4,
            steps_per_eval: 250_000,
            max_frames: 400_000,
            replay_size: 1_000_000,
            batch: 32,
            lr: 0.0000625,
            adam_epsilon: 1.5e-4,
            learning_starts: 80_000,
            eval_episodes: 5,
            eval_epsilon: 0.001,
            noop_max: 30,
            max_episode_frames: 108_000,
        }
    }
}

impl TrainConfig {
    /// Replay entries required before learning starts.
    pub fn warmup_transitions(&self) -> usize {
        (self.learning_starts / self.frames_per_step.max(1)) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_final > self.eps_initial
            || !(0.0..=1.0).contains(&self.eps_initial)
            || !(0.0..=1.0).contains(&self.eps_final)
        {
            return config_err(format!(
                "need 0 <= eps_final ({}) <= eps_initial ({}) <= 1",
                self.eps_final, self.eps_initial
            ));
        }
        if self.frames_per_step == 0 || self.sync_frames == 0 || !self.sync_frames.is_multiple_of(self.frames_per_step)
        {
            return config_err(format!(
                "sync_frames ({}) must be a positive multiple of frames_per_step ({})",
                self.sync_frames, self.frames_per_step
            ));
        }
        if self.steps_per_update == 0 || self.steps_per_eval == 0 || self.batch == 0 || self.replay_size == 0 {
            return config_err("steps_per_update, steps_per_eval, batch and replay_size must be positive");
        }
        if self.batch > self.replay_size {
            return config_err(format!("batch ({}) exceeds replay_size ({})", self.batch, self.replay_size));
        }
        if !(0.0..=1.0).contains(&self.gamma) || self.lr <= 0.0 || self.adam_epsilon <= 0.0 {
            return config_err("gamma must lie in [0, 1]; lr and adam_epsilon must be positive");
        }
        if self.noop_max == 0 {
            return config_err("noop_max must be at least 1");
        }
        if self.eval_episodes == 0 || !(0.0..=1.0).contains(&self.eval_epsilon) {
            return config_err("eval_episodes must be positive and eval_epsilon in [0, 1]");
        }
        Ok(())
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub swin: SwinConfig,
    pub cnn: CnnConfig,
    pub backbone: BackboneKind,
    pub env: String,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            swin: SwinConfig::default(),
            cnn: CnnConfig::default(),
            backbone: BackboneKind::Swin,
            env: "catch".to_string(),
            seed: 0,
        }
    }
}

/// Every key accepted in config files and `--set` overrides.
pub const CONFIG_KEYS: &[&str] = &[
    "backbone",
    "env",
    "seed",
    "gamma",
    "eps_initial",
    "eps_final",
    "eps_decay_frames",
    "sync_frames",
    "frames_per_step",
    "steps_per_update",
    "steps_per_eval",
    "max_frames",
    "replay_size",
    "batch",
    "lr",
    "adam_epsilon",
    "learning_starts",
    "eval_episodes",
    "eval_epsilon",
    "noop_max",
    "max_episode_frames",
    "blocks_per_layer",
    "heads_per_layer",
    "patch_size",
    "window_size",
    "embed_dim",
    "mlp_ratio",
    "drop_path_rate",
    "mixer",
    "cnn_channels",
    "cnn_kernels",
    "cnn_strides",
    "fc_width",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.replace('_', "").parse().map_err(|_| Error::Config(format!("invalid value `{value}` for key `{key}`")))
}

fn list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn triple(key: &str, value: &str) -> Result<[usize; 3]> {
    let v = list(key, value)?;
    v.try_into().map_err(|_| Error::Config(format!("key `{key}` needs exactly three comma-separated values")))
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let t = &mut self.train;
        match key {
            "backbone" => self.backbone = value.parse()?,
            "env" => self.env = value.to_string(),
            "seed" => self.seed = num(key, value)?,
            "gamma" => t.gamma = num(key, value)?,
            "eps_initial" => t.eps_initial = num(key, value)?,
            "eps_final" => t.eps_final = num(key, value)?,
            "eps_decay_frames" => t.eps_decay_frames = num(key, value)?,
            "sync_frames" => t.sync_frames = num(key, value)?,
            "frames_per_step" => t.frames_per_step = num(key, value)?,
            "steps_per_update" => t.steps_per_update = num(key, value)?,
            "steps_per_eval" => t.steps_per_eval = num(key, value)?,
            "max_frames" => t.max_frames = num(key, value)?,
            "replay_size" => t.replay_size = num(key, value)?,
            "batch" => t.batch = num(key, value)?,
            "lr" => t.lr = num(key, value)?,
            "adam_epsilon" => t.adam_epsilon = num(key, value)?,
            "learning_starts" => t.learning_starts = num(key, value)?,
            "eval_episodes" => t.eval_episodes = num(key, value)?,
            "eval_epsilon" => t.eval_epsilon = num(key, value)?,
            "noop_max" => t.noop_max = num(key, value)?,
            "max_episode_frames" => t.max_episode_frames = num(key, value)?,
            "blocks_per_layer" => self.swin.blocks_per_layer = list(key, value)?,
            "heads_per_layer" => self.swin.heads_per_layer = list(key, value)?,
            "patch_size" => self.swin.patch_size = num(key, value)?,
            "window_size" => self.swin.window_size = num(key, value)?,
            "embed_dim" => self.swin.embed_dim = num(key, value)?,
            "mlp_ratio" => self.swin.mlp_ratio = num(key, value)?,
            "drop_path_rate" => self.swin.drop_path_rate = num(key, value)?,
            "mixer" => self.swin.mixer = value.parse()?,
            "cnn_channels" => {
                for (c, v) in self.cnn.convs.iter_mut().zip(triple(key, value)?) {
                    c.out_channels = v;
                }
            }
            "cnn_kernels" => {
                for (c, v) in self.cnn.convs.iter_mut().zip(triple(key, value)?) {
                    c.kernel = v;
                }
            }
            "cnn_strides" => {
                for (c, v) in self.cnn.convs.iter_mut().zip(triple(key, value)?) {
                    c.stride = v;
                }
            }
            "fc_width" => self.cnn.fc_width = num(key, value)?,
            _ => {
                return config_err(format!("unknown key `{key}`; valid keys: {}", CONFIG_KEYS.join(", ")));
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the current values. Blank lines
    /// and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return config_err(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1));
            };
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Current value of every key, in [`CONFIG_KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let s = &self.swin;
        let c = &self.cnn;
        CONFIG_KEYS
            .iter()
            .map(|&k| {
                let v = match k {
                    "backbone" => self.backbone.to_string(),
                    "env" => self.env.clone(),
                    "seed" => self.seed.to_string(),
                    "gamma" => t.gamma.to_string(),
                    "eps_initial" => t.eps_initial.to_string(),
                    "eps_final" => t.eps_final.to_string(),
                    "eps_decay_frames" => t.eps_decay_frames.to_string(),
                    "sync_frames" => t.sync_frames.to_string(),
                    "frames_per_step" => t.frames_per_step.to_string(),
                    "steps_per_update" => t.steps_per_update.to_string(),
                    "steps_per_eval" => t.steps_per_eval.to_string(),
                    "max_frames" => t.max_frames.to_string(),
                    "replay_size" => t.replay_size.to_string(),
                    "batch" => t.batch.to_string(),
                    "lr" => t.lr.to_string(),
                    "adam_epsilon" => t.adam_epsilon.to_string(),
                    "learning_starts" => t.learning_starts.to_string(),
                    "eval_episodes" => t.eval_episodes.to_string(),
                    "eval_epsilon" => t.eval_epsilon.to_string(),
                    "noop_max" => t.noop_max.to_string(),
                    "max_episode_frames" => t.max_episode_frames.to_string(),
                    "blocks_per_layer" => join(&s.blocks_per_layer),
                    "heads_per_layer" => join(&s.heads_per_layer),
                    "patch_size" => s.patch_size.to_string(),
                    "window_size" => s.window_size.to_string(),
                    "embed_dim" => s.embed_dim.to_string(),
                    "mlp_ratio" => s.mlp_ratio.to_string(),
                    "drop_path_rate" => s.drop_path_rate.to_string(),
                    "mixer" => s.mixer.to_string(),
                    "cnn_channels" => join(&c.convs.map(|v| v.out_channels)),
                    "cnn_kernels" => join(&c.convs.map(|v| v.kernel)),
                    "cnn_strides" => join(&c.convs.map(|v| v.stride)),
                    "fc_width" => c.fc_width.to_string(),
                    _ => unreachable!("key list and match out of sync: {k}"),
                };
                (k, v)
            })
            .collect()
    }

    /// Serializes to the `key = value` format; parsing the result yields an
    /// equal config.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        match self.backbone {
            BackboneKind::Swin => self.swin.validate(),
            BackboneKind::Cnn => self.cnn.flatten_len().map(|_| ()),
        }
    }

    /// Sets the action count of both backbone configs.
    pub fn with_num_actions(mut self, n: usize) -> Self {
        self.swin.num_actions = n;
        self.cnn.num_actions = n;
        self
    }
}
