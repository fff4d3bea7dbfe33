//! Token mixers applied inside each window.

use std::sync::Arc;

use rand::RngCore;
use swindqn_tensor::{grouped_conv1d_mix, softmax, Element, Tensor};

use crate::error::{config_err, Result};
use crate::nn::{nest, param, uniform, zeros_param, Linear, Module, NamedParams, TensorMap};
use crate::swin::window::relative_position_index;

/// Per-head learned `N × N` token mixing (a kernel-1 grouped 1D convolution
/// over `heads · N` channels).
#[derive(Clone, Debug)]
pub struct SpatialMlp<T: Element> {
    pub heads: usize,
    /// `[heads, N, N]`
    pub weight: Tensor<T>,
    /// `[heads, N]`
    pub bias: Tensor<T>,
}

impl<T: Element> SpatialMlp<T> {
    pub fn new(rng: &mut dyn RngCore, heads: usize, tokens: usize) -> Self {
        let bound = 1.0 / (tokens as f64).sqrt();
        SpatialMlp {
            heads,
            weight: param(uniform(rng, heads * tokens * tokens, bound), &[heads, tokens, tokens]),
            bias: param(uniform(rng, heads * tokens, bound), &[heads, tokens]),
        }
    }

    pub fn forward(&self, windows: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(grouped_conv1d_mix(windows, &self.weight, Some(&self.bias))?)
    }
}

impl<T: Element> Module<T> for SpatialMlp<T> {
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        out.push((format!("{prefix}weight"), self.weight.clone()));
        out.push((format!("{prefix}bias"), self.bias.clone()));
    }

    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self {
        SpatialMlp { heads: self.heads, weight: f(&self.weight), bias: f(&self.bias) }
    }
}

/// Multi-head self-attention with a learned relative position bias:
/// `softmax(QKᵀ/√d + B) V` per head, then an output projection.
#[derive(Clone, Debug)]
pub struct WindowAttention<T: Element> {
    pub heads: usize,
    pub window: usize,
    pub qkv: Linear<T>,
    pub proj: Linear<T>,
    /// `[(2·window − 1)², heads]`
    pub rel_bias_table: Tensor<T>,
    pub rel_index: Arc<Vec<usize>>,
}

impl<T: Element> WindowAttention<T> {
    pub fn new(rng: &mut dyn RngCore, dim: usize, heads: usize, window: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return config_err(format!("attention: width {dim} is not divisible by {heads} heads"));
        }
        let rows = (2 * window - 1) * (2 * window - 1);
        Ok(WindowAttention {
            heads,
            window,
            qkv: Linear::trunc_normal(rng, dim, 3 * dim, true),
            proj: Linear::trunc_normal(rng, dim, dim, true),
            rel_bias_table: zeros_param(&[rows, heads]),
            rel_index: Arc::new(relative_position_index(window)),
        })
    }

    /// Bias `B` as `[heads, N, N]`.
    pub fn position_bias(&self) -> Result<Tensor<T>> {
        let n = self.window * self.window;
        Ok(self.rel_bias_table.index_select_rows(&self.rel_index)?.permute(&[1, 0])?.reshape(&[self.heads, n, n])?)
    }

    /// Returns `(attention weights [Bw, heads, N, N], values [Bw·heads, N, d])`.
    fn attend(&self, windows: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let &[bw, n, c] = windows.shape() else {
            return config_err(format!("attention: expected [B·nW, N, C], got {:?}", windows.shape()));
        };
        if n != self.window * self.window {
            return config_err(format!("attention: {n} tokens per window, expected {}", self.window * self.window));
        }
        let h = self.heads;
        let d = c / h;
        let qkv = self.qkv.forward(windows)?.reshape(&[bw, n, 3, h, d])?.permute(&[2, 0, 3, 1, 4])?;
        let part = |i| -> Result<Tensor<T>> { Ok(qkv.select0(i)?.reshape(&[bw * h, n, d])?) };
        let (q, k, v) = (part(0)?, part(1)?, part(2)?);
        let scale = T::from_f64_lossy(1.0 / (d as f64).sqrt());
        let scores = q.bmm(&k, false, true)?.scale(scale).reshape(&[bw, h, n, n])?;
        let attn = softmax(&scores.add(&self.position_bias()?)?)?;
        Ok((attn, v))
    }

    /// Attention weights `[Bw, heads, N, N]`; every row sums to one.
    pub fn attention_weights(&self, windows: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.attend(windows)?.0)
    }

    pub fn forward(&self, windows: &Tensor<T>) -> Result<Tensor<T>> {
        let (bw, n, c) = (windows.shape()[0], windows.shape()[1], windows.shape()[2]);
        let h = self.heads;
        let (attn, v) = self.attend(windows)?;
        let mixed = attn
            .reshape(&[bw * h, n, n])?
            .bmm(&v, false, false)?
            .reshape(&[bw, h, n, c / h])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[bw, n, c])?;
        self.proj.forward(&mixed).map_err(Into::into)
    }
}

impl<T: Element> Module<T> for WindowAttention<T> {
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        nest(&self.qkv, prefix, "qkv", out);
        nest(&self.proj, prefix, "proj", out);
        out.push((format!("{prefix}rel_bias_table"), self.rel_bias_table.clone()));
    }

    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self {
        WindowAttention {
            heads: self.heads,
            window: self.window,
            qkv: self.qkv.map_params(f),
            proj: self.proj.map_params(f),
            rel_bias_table: f(&self.rel_bias_table),
            rel_index: Arc::clone(&self.rel_index),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Mixer<T: Element> {
    Spatial(SpatialMlp<T>),
    Attention(WindowAttention<T>),
}

impl<T: Element> Mixer<T> {
    pub fn forward(&self, windows: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Mixer::Spatial(m) => m.forward(windows),
            Mixer::Attention(m) => m.forward(windows),
        }
    }
}

impl<T: Element> Module<T> for Mixer<T> {
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        match self {
            Mixer::Spatial(m) => m.collect_params(prefix, out),
            Mixer::Attention(m) => m.collect_params(prefix, out),
        }
    }

    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self {
        match self {
            Mixer::Spatial(m) => Mixer::Spatial(m.map_params(f)),
            Mixer::Attention(m) => Mixer::Attention(m.map_params(f)),
        }
    }
}
