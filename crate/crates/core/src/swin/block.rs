//! Swin block, stochastic depth, patch embedding and patch merging.

use rand::{Rng, RngCore};
use swindqn_tensor::{Element, Tensor};

use crate::config::MixerKind;
use crate::error::{config_err, Result};
use crate::nn::{nest, Conv2d, LayerNorm, Linear, Module, NamedParams, TensorMap};
use crate::qnet::Mode;
use crate::swin::mixer::{Mixer, SpatialMlp, WindowAttention};
use crate::swin::window::{window_merge, window_partition};

/// Stochastic depth on a residual branch `[B, ...]`.
///
/// In training mode each sample's branch is zeroed with probability `rate`
/// and otherwise scaled by `1/(1 − rate)`. In eval mode the branch passes
/// through unchanged.
pub fn drop_path<T: Element>(branch: &Tensor<T>, rate: f64, mode: &mut Mode<'_>) -> Result<Tensor<T>> {
    if !(0.0..1.0).contains(&rate) {
        return config_err(format!("drop path rate {rate} must lie in [0, 1)"));
    }
    let Mode::Train(rng) = mode else {
        return Ok(branch.clone());
    };
    if rate == 0.0 {
        return Ok(branch.clone());
    }
    let keep_scale = T::from_f64_lossy(1.0 / (1.0 - rate));
    let batch = branch.shape()[0];
    let factors: Vec<T> = (0..batch).map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep_scale }).collect();
    Ok(branch.scale_rows(&factors)?)
}

/// Convolutional patch embedding followed by a layer norm.
#[derive(Clone, Debug)]
pub struct PatchEmbed<T: Element> {
    pub proj: Conv2d<T>,
    pub norm: LayerNorm<T>,
}

impl<T: Element> PatchEmbed<T> {
    pub fn new(rng: &mut dyn RngCore, in_channels: usize, embed_dim: usize, patch: usize) -> Self {
        PatchEmbed {
            proj: Conv2d::fan_in_uniform(rng, in_channels, embed_dim, patch, patch),
            norm: LayerNorm::new(embed_dim),
        }
    }

    /// `[B, C_in, H, W]` → `[B, (H/p)·(W/p), embed_dim]`.
    pub fn forward(&self, frames: &Tensor<T>) -> Result<Tensor<T>> {
        let patch = self.proj.stride;
        let &[b, _, h, w] = frames.shape() else {
            return config_err(format!("patch embed: expected [B, C, H, W], got {:?}", frames.shape()));
        };
        if h % patch != 0 || w % patch != 0 {
            return config_err(format!("patch embed: {h}x{w} input is not divisible by patch {patch}"));
        }
        let x = self.proj.forward(frames)?;
        let c = x.shape()[1];
        let tokens = x.permute(&[0, 2, 3, 1])?.reshape(&[b, (h / patch) * (w / patch), c])?;
        self.norm.forward(&tokens).map_err(Into::into)
    }
}

impl<T: Element> Module<T> for PatchEmbed<T> {
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        nest(&self.proj, prefix, "proj", out);
        nest(&self.norm, prefix, "norm", out);
    }

    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self {
        PatchEmbed { proj: self.proj.map_params(f), norm: self.norm.map_params(f) }
    }
}

/// Concatenates 2×2 token neighbourhoods (4C), normalizes and projects to 2C.
#[derive(Clone, Debug)]
pub struct PatchMerging<T: Element> {
    pub norm: LayerNorm<T>,
    pub reduction: Linear<T>,
}

impl<T: Element> PatchMerging<T> {
    pub fn new(rng: &mut dyn RngCore, dim: usize) -> Self {
        PatchMerging { norm: LayerNorm::new(4 * dim), reduction: Linear::trunc_normal(rng, 4 * dim, 2 * dim, false) }
    }

    /// `[B, H·W, C]` → `[B, (H/2)·(W/2), 2C]`.
    pub fn forward(&self, x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
        let &[b, l, c] = x.shape() else {
            return config_err(format!("patch merging: expected [B, L, C], got {:?}", x.shape()));
        };
        if l != h * w || !h.is_multiple_of(2) || !w.is_multiple_of(2) {
            return config_err(format!("patch merging: cannot merge {l} tokens as a {h}x{w} grid"));
        }
        // Neighbour order (0,0), (1,0), (0,1), (1,1) in (row, col) offsets.
        let merged = x.reshape(&[b, h / 2, 2, w / 2, 2, c])?.permute(&[0, 1, 3, 4, 2, 5])?.reshape(&[
            b,
            (h / 2) * (w / 2),
            4 * c,
        ])?;
        self.reduction.forward(&self.norm.forward(&merged)?).map_err(Into::into)
    }
}

impl<T: Element> Module<T> for PatchMerging<T> {
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        nest(&self.norm, prefix, "norm", out);
        nest(&self.reduction, prefix, "reduction", out);
    }

    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self {
        PatchMerging { norm: self.norm.map_params(f), reduction: self.reduction.map_params(f) }
    }
}

/// Geometry of one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockGeometry {
    pub resolution: usize,
    pub dim: usize,
    pub heads: usize,
    pub window: usize,
    pub shift: usize,
}

#[derive(Clone, Debug)]
pub struct SwinBlock<T: Element> {
    pub geometry: BlockGeometry,
    pub drop_path_rate: f64,
    pub norm1: LayerNorm<T>,
    pub mixer: Mixer<T>,
    pub norm2: LayerNorm<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

impl<T: Element> SwinBlock<T> {
    pub fn new(
        rng: &mut dyn RngCore,
        geometry: BlockGeometry,
        mlp_ratio: usize,
        mixer: MixerKind,
        drop_path_rate: f64,
    ) -> Result<Self> {
        let BlockGeometry { dim, heads, window, .. } = geometry;
        if heads == 0 || dim % heads != 0 {
            return config_err(format!("swin block: width {dim} is not divisible by {heads} heads"));
        }
        let mixer = match mixer {
            MixerKind::SpatialMlp => Mixer::Spatial(SpatialMlp::new(rng, heads, window * window)),
            MixerKind::WindowedAttention => Mixer::Attention(WindowAttention::new(rng, dim, heads, window)?),
        };
        Ok(SwinBlock {
            geometry,
            drop_path_rate,
            norm1: LayerNorm::new(dim),
            mixer,
            norm2: LayerNorm::new(dim),
            fc1: Linear::trunc_normal(rng, dim, mlp_ratio * dim, true),
            fc2: Linear::trunc_normal(rng, mlp_ratio * dim, dim, true),
        })
    }

    /// `[B, H·W, C]` → `[B, H·W, C]`.
    pub fn forward(&self, x: &Tensor<T>, mode: &mut Mode<'_>) -> Result<Tensor<T>> {
        let BlockGeometry { resolution: r, dim, window, shift, .. } = self.geometry;
        let b = x.shape()[0];
        let grid = self.norm1.forward(x)?.reshape(&[b, r, r, dim])?;
        let windows = window_partition(&grid, window, shift)?;
        let mixed = self.mixer.forward(&windows)?;
        let branch = window_merge(&mixed, window, shift, r, r)?.reshape(&[b, r * r, dim])?;
        let x = x.add(&drop_path(&branch, self.drop_path_rate, mode)?)?;
        let hidden = self.fc1.forward(&self.norm2.forward(&x)?)?.gelu();
        let branch = self.fc2.forward(&hidden)?;
        Ok(x.add(&drop_path(&branch, self.drop_path_rate, mode)?)?)
    }
}

impl<T: Element> Module<T> for SwinBlock<T> {
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        nest(&self.norm1, prefix, "norm1", out);
        nest(&self.mixer, prefix, "mixer", out);
        nest(&self.norm2, prefix, "norm2", out);
        nest(&self.fc1, prefix, "fc1", out);
        nest(&self.fc2, prefix, "fc2", out);
    }

    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self {
        SwinBlock {
            geometry: self.geometry,
            drop_path_rate: self.drop_path_rate,
            norm1: self.norm1.map_params(f),
            mixer: self.mixer.map_params(f),
            norm2: self.norm2.map_params(f),
            fc1: self.fc1.map_params(f),
            fc2: self.fc2.map_params(f),
        }
    }
}
