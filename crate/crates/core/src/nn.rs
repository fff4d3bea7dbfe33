//! Parameter containers and initializers shared by both backbones.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use swindqn_tensor::{layer_norm, Element, Result, Tensor};

/// Named parameter list in a stable order.
pub type NamedParams<T> = Vec<(String, Tensor<T>)>;

/// Maps every parameter tensor of a module to a new tensor.
pub type TensorMap<'a, T> = dyn FnMut(&Tensor<T>) -> Tensor<T> + 'a;

/// A module that owns parameters.
pub trait Module<T: Element>: Sized {
    /// Appends `(prefix + name, tensor)` for every parameter.
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>);

    /// Structural copy with every parameter passed through `f`.
    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self;

    fn named_params(&self) -> NamedParams<T> {
        let mut out = Vec::new();
        self.collect_params("", &mut out);
        out
    }
}

/// Truncated normal (cut at two standard deviations), resampled on rejection.
pub fn trunc_normal<T: Element>(rng: &mut dyn RngCore, n: usize, std: f64) -> Vec<T> {
    let normal = Normal::new(0.0, std).expect("positive std");
    (0..n)
        .map(|_| loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= 2.0 * std {
                break T::from_f64_lossy(v);
            }
        })
        .collect()
}

/// Uniform on `[-bound, bound]`.
pub fn uniform<T: Element>(rng: &mut dyn RngCore, n: usize, bound: f64) -> Vec<T> {
    (0..n).map(|_| T::from_f64_lossy(rng.gen_range(-bound..=bound))).collect()
}

pub fn param<T: Element>(data: Vec<T>, shape: &[usize]) -> Tensor<T> {
    Tensor::parameter(data, shape).expect("initializer length matches shape")
}

pub fn zeros_param<T: Element>(shape: &[usize]) -> Tensor<T> {
    param(vec![T::zero(); shape.iter().product()], shape)
}

fn push<T: Element>(out: &mut NamedParams<T>, prefix: &str, name: &str, t: &Tensor<T>) {
    out.push((format!("{prefix}{name}"), t.clone()));
}

#[derive(Clone, Debug)]
pub struct Linear<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Element> Linear<T> {
    /// Truncated-normal(0.02) weight, zero bias.
    pub fn trunc_normal(rng: &mut dyn RngCore, inp: usize, out: usize, bias: bool) -> Self {
        Linear {
            weight: param(trunc_normal(rng, out * inp, 0.02), &[out, inp]),
            bias: bias.then(|| zeros_param(&[out])),
        }
    }

    /// Weight and bias uniform on ±1/√fan_in.
    pub fn fan_in_uniform(rng: &mut dyn RngCore, inp: usize, out: usize) -> Self {
        let bound = 1.0 / (inp as f64).sqrt();
        Linear {
            weight: param(uniform(rng, out * inp, bound), &[out, inp]),
            bias: Some(param(uniform(rng, out, bound), &[out])),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.linear(&self.weight, self.bias.as_ref())
    }
}

impl<T: Element> Module<T> for Linear<T> {
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        push(out, prefix, "weight", &self.weight);
        if let Some(b) = &self.bias {
            push(out, prefix, "bias", b);
        }
    }

    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self {
        Linear { weight: f(&self.weight), bias: self.bias.as_ref().map(f) }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm<T: Element> {
    pub gain: Tensor<T>,
    pub bias: Tensor<T>,
}

pub const LN_EPS: f64 = 1e-5;

impl<T: Element> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        LayerNorm { gain: param(vec![T::one(); dim], &[dim]), bias: zeros_param(&[dim]) }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        layer_norm(x, &self.gain, &self.bias, T::from_f64_lossy(LN_EPS))
    }
}

impl<T: Element> Module<T> for LayerNorm<T> {
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        push(out, prefix, "gain", &self.gain);
        push(out, prefix, "bias", &self.bias);
    }

    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self {
        LayerNorm { gain: f(&self.gain), bias: f(&self.bias) }
    }
}

/// Valid convolution layer with bias.
#[derive(Clone, Debug)]
pub struct Conv2d<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
}

impl<T: Element> Conv2d<T> {
    /// Weight and bias uniform on ±1/√fan_in.
    pub fn fan_in_uniform(rng: &mut dyn RngCore, inp: usize, out: usize, kernel: usize, stride: usize) -> Self {
        let fan_in = inp * kernel * kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        Conv2d {
            weight: param(uniform(rng, out * fan_in, bound), &[out, inp, kernel, kernel]),
            bias: param(uniform(rng, out, bound), &[out]),
            stride,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        swindqn_tensor::conv2d(x, &self.weight, Some(&self.bias), self.stride)
    }
}

impl<T: Element> Module<T> for Conv2d<T> {
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        push(out, prefix, "weight", &self.weight);
        push(out, prefix, "bias", &self.bias);
    }

    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self {
        Conv2d { weight: f(&self.weight), bias: f(&self.bias), stride: self.stride }
    }
}

/// Collects the parameters of `m` under `prefix.`.
pub fn nest<T: Element, M: Module<T>>(m: &M, prefix: &str, name: &str, out: &mut NamedParams<T>) {
    m.collect_params(&format!("{prefix}{name}."), out);
}
