//! Swin-MLP Q-network: patch embedding, stages of (shifted) window blocks
//! with patch merging in between, then a pooled linear head.

mod block;
mod mixer;
mod window;

pub use block::{drop_path, BlockGeometry, PatchEmbed, PatchMerging, SwinBlock};
pub use mixer::{Mixer, SpatialMlp, WindowAttention};
pub use window::{relative_position_index, window_merge, window_partition};

use rand::RngCore;
use swindqn_tensor::{Element, Tensor};

use crate::config::SwinConfig;
use crate::error::{config_err, Result};
use crate::nn::{nest, LayerNorm, Linear, Module, NamedParams, TensorMap};
use crate::qnet::{Mode, QNetwork, StagedOutput};

#[derive(Clone, Debug)]
pub struct SwinStage<T: Element> {
    pub resolution: usize,
    pub dim: usize,
    pub blocks: Vec<SwinBlock<T>>,
    pub merge: Option<PatchMerging<T>>,
}

impl<T: Element> Module<T> for SwinStage<T> {
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        for (i, b) in self.blocks.iter().enumerate() {
            nest(b, prefix, &format!("blocks.{i}"), out);
        }
        if let Some(m) = &self.merge {
            nest(m, prefix, "merge", out);
        }
    }

    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self {
        SwinStage {
            resolution: self.resolution,
            dim: self.dim,
            blocks: self.blocks.iter().map(|b| b.map_params(f)).collect(),
            merge: self.merge.as_ref().map(|m| m.map_params(f)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SwinQNet<T: Element> {
    pub config: SwinConfig,
    pub embed: PatchEmbed<T>,
    pub stages: Vec<SwinStage<T>>,
    pub norm: LayerNorm<T>,
    pub head: Linear<T>,
}

impl<T: Element> SwinQNet<T> {
    pub fn new(config: &SwinConfig, rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        let embed = PatchEmbed::new(rng, config.in_channels, config.embed_dim, config.patch_size);
        let mut stages = Vec::with_capacity(config.layers());
        for s in 0..config.layers() {
            let (resolution, dim) = (config.stage_resolution(s), config.stage_dim(s));
            let blocks = (0..config.blocks_per_layer[s])
                .map(|i| {
                    let geometry = BlockGeometry {
                        resolution,
                        dim,
                        heads: config.heads_per_layer[s],
                        window: config.stage_window(s),
                        shift: config.block_shift(s, i),
                    };
                    SwinBlock::new(rng, geometry, config.mlp_ratio, config.mixer, config.drop_path_rate)
                })
                .collect::<Result<Vec<_>>>()?;
            let merge = (s + 1 < config.layers()).then(|| PatchMerging::new(rng, dim));
            stages.push(SwinStage { resolution, dim, blocks, merge });
        }
        let last = config.stage_dim(config.layers() - 1);
        Ok(SwinQNet {
            config: config.clone(),
            embed,
            stages,
            norm: LayerNorm::new(last),
            head: Linear::trunc_normal(rng, last, config.num_actions, true),
        })
    }
}

impl<T: Element> Module<T> for SwinQNet<T> {
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        nest(&self.embed, prefix, "embed", out);
        for (i, s) in self.stages.iter().enumerate() {
            nest(s, prefix, &format!("stages.{i}"), out);
        }
        nest(&self.norm, prefix, "norm", out);
        nest(&self.head, prefix, "head", out);
    }

    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self {
        SwinQNet {
            config: self.config.clone(),
            embed: self.embed.map_params(f),
            stages: self.stages.iter().map(|s| s.map_params(f)).collect(),
            norm: self.norm.map_params(f),
            head: self.head.map_params(f),
        }
    }
}

impl<T: Element> QNetwork<T> for SwinQNet<T> {
    fn forward_staged(&self, frames: &Tensor<T>, mut mode: Mode<'_>) -> Result<StagedOutput<T>> {
        let cfg = &self.config;
        let expected = [cfg.in_channels, cfg.input_size, cfg.input_size];
        if frames.rank() != 4 || frames.shape()[1..] != expected {
            return config_err(format!(
                "swin: expected [B, {}, {}, {}] input, got {:?}",
                expected[0],
                expected[1],
                expected[2],
                frames.shape()
            ));
        }
        let b = frames.shape()[0];
        let mut x = self.embed.forward(frames)?;
        let mut grids = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            for block in &stage.blocks {
                x = block.forward(&x, &mut mode)?;
            }
            let r = stage.resolution;
            grids.push(x.reshape(&[b, r, r, stage.dim])?);
            if let Some(m) = &stage.merge {
                x = m.forward(&x, r, r)?;
            }
        }
        let pooled = self.norm.forward(&x)?.mean_axis(1)?;
        let q = self.head.forward(&pooled)?;
        Ok(StagedOutput { q, stages: grids })
    }

    fn num_actions(&self) -> usize {
        self.config.num_actions
    }

    fn parameters(&self) -> NamedParams<T> {
        self.named_params()
    }

    fn frozen_copy(&self) -> Self {
        self.map_params(&mut |t| t.detach())
    }
}
