//! Convolutional baseline Q-network: three valid convolutions, one hidden
//! fully connected layer and a linear Q-value head.

use rand::RngCore;
use swindqn_tensor::{Element, Tensor};

use crate::config::CnnConfig;
use crate::error::{config_err, Result};
use crate::nn::{nest, Conv2d, Linear, Module, NamedParams, TensorMap};
use crate::qnet::{Mode, QNetwork, StagedOutput};

#[derive(Clone, Debug)]
pub struct CnnQNet<T: Element> {
    pub config: CnnConfig,
    pub convs: Vec<Conv2d<T>>,
    pub fc: Linear<T>,
    pub head: Linear<T>,
}

impl<T: Element> CnnQNet<T> {
    pub fn new(config: &CnnConfig, rng: &mut dyn RngCore) -> Result<Self> {
        let flat = config.flatten_len()?;
        if config.num_actions == 0 || config.fc_width == 0 || config.in_channels == 0 {
            return config_err("cnn: num_actions, fc_width and in_channels must be positive");
        }
        let mut inp = config.in_channels;
        let mut convs = Vec::with_capacity(3);
        for c in &config.convs {
            convs.push(Conv2d::fan_in_uniform(rng, inp, c.out_channels, c.kernel, c.stride));
            inp = c.out_channels;
        }
        Ok(CnnQNet {
            config: config.clone(),
            convs,
            fc: Linear::fan_in_uniform(rng, flat, config.fc_width),
            head: Linear::fan_in_uniform(rng, config.fc_width, config.num_actions),
        })
    }
}

impl<T: Element> Module<T> for CnnQNet<T> {
    fn collect_params(&self, prefix: &str, out: &mut NamedParams<T>) {
        for (i, c) in self.convs.iter().enumerate() {
            nest(c, prefix, &format!("conv{i}"), out);
        }
        nest(&self.fc, prefix, "fc", out);
        nest(&self.head, prefix, "head", out);
    }

    fn map_params(&self, f: &mut TensorMap<'_, T>) -> Self {
        CnnQNet {
            config: self.config.clone(),
            convs: self.convs.iter().map(|c| c.map_params(f)).collect(),
            fc: self.fc.map_params(f),
            head: self.head.map_params(f),
        }
    }
}

impl<T: Element> QNetwork<T> for CnnQNet<T> {
    fn forward_staged(&self, frames: &Tensor<T>, _mode: Mode<'_>) -> Result<StagedOutput<T>> {
        let batch = frames.shape().first().copied().unwrap_or(0);
        let mut x = frames.clone();
        let mut stages = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            x = conv.forward(&x)?.relu();
            stages.push(x.permute(&[0, 2, 3, 1])?);
        }
        let flat = x.reshape(&[batch, x.numel() / batch.max(1)])?;
        let q = self.head.forward(&self.fc.forward(&flat)?.relu())?;
        Ok(StagedOutput { q, stages })
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
