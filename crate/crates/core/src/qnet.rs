//! The Q-network contract the agent is written against.

use rand::RngCore;
use swindqn_tensor::{Element, Tensor};

use crate::cnn::CnnQNet;
use crate::config::{BackboneKind, ExperimentConfig};
use crate::error::Result;
use crate::nn::{Module, NamedParams, TensorMap};
use crate::swin::SwinQNet;

/// Forward-pass mode. Training mode carries the drop-path random stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    pub fn reborrow(&mut self) -> Mode<'_> {
        match self {
            Mode::Eval => Mode::Eval,
            Mode::Train(rng) => Mode::Train(&mut **rng),
        }
    }
}

/// Output of a forward pass that also exposes intermediate feature grids.
pub struct StagedOutput<T: Element> {
    /// `[B, num_actions]`
    pub q: Tensor<T>,
    /// One `[B, H, W, C]` activation grid per backbone stage.
    pub stages: Vec<Tensor<T>>,
}

/// State → Q-value function over stacked `[B, 4, H, W]` frames in `[0, 1]`.
pub trait QNetwork<T: Element>: Send + Sync + Sized {
    fn forward_staged(&self, frames: &Tensor<T>, mode: Mode<'_>) -> Result<StagedOutput<T>>;

    fn forward(&self, frames: &Tensor<T>, mode: Mode<'_>) -> Result<Tensor<T>> {
        Ok(self.forward_staged(frames, mode)?.q)
    }

    fn num_actions(&self) -> usize;

    /// Every parameter with a stable dotted name.
    fn parameters(&self) -> NamedParams<T>;

    /// Copy whose parameters share this network's current values but never
    /// receive gradients. Used for target networks and evaluation snapshots.
    fn frozen_copy(&self) -> Self;
}

/// Either backbone, chosen at run time.
#[derive(Clone, Debug)]
pub enum Backbone<T: Element> {
    Cnn(CnnQNet<T>),
    Swin(SwinQNet<T>),
}

impl<T: Element> Backbone<T> {
    /// Builds the backbone selected by `cfg` with `num_actions` outputs.
    pub fn build(cfg: &ExperimentConfig, num_actions: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let cfg = cfg.clone().with_num_actions(num_actions);
        Ok(match cfg.backbone {
            BackboneKind::Cnn => Backbone::Cnn(CnnQNet::new(&cfg.cnn, rng)?),
            BackboneKind::Swin => Backbone::Swin(SwinQNet::new(&cfg.swin, rng)?),
        })
    }

    pub fn kind(&self) -> BackboneKind {
        match self {
            Backbone::Cnn(_) => BackboneKind::Cnn,
            Backbone::Swin(_) => BackboneKind::Swin,
        }
    }
}

impl<T: Element> Module<T> for Backbone<T> {
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        match self {
            Backbone::Cnn(n) => n.collect_params(prefix, out),
            Backbone::Swin(n) => n.collect_params(prefix, out),
        }
    }

    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self {
        match self {
            Backbone::Cnn(n) => Backbone::Cnn(n.map_params(f)),
            Backbone::Swin(n) => Backbone::Swin(n.map_params(f)),
        }
    }
}

impl<T: Element> QNetwork<T> for Backbone<T> {
    fn forward_staged(&self, frames: &Tensor<T>, mode: Mode<'_>) -> Result<StagedOutput<T>> {
        match self {
            Backbone::Cnn(n) => n.forward_staged(frames, mode),
            Backbone::Swin(n) => n.forward_staged(frames, mode),
        }
    }

    fn num_actions(&self) -> usize {
        match self {
            Backbone::Cnn(n) => n.num_actions(),
            Backbone::Swin(n) => n.num_actions(),
        }
    }

    fn parameters(&self) -> NamedParams<T> {
        self.named_params()
    }

    fn frozen_copy(&self) -> Self {
        self.map_params(&mut |t| t.detach())
    }
}
