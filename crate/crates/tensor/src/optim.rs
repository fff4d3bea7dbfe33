//! Bias-corrected Adam.

use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 6.25e-5, beta1: 0.9, beta2: 0.999, epsilon: 1.5e-4 }
    }
}

/// Optimizer state: one pair of moment buffers per parameter, in the order
/// the parameters are passed to [`AdamState::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Element = f32> {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Element> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        AdamState {
            config,
            step_count: 0,
            first_moment: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            second_moment: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
        }
    }

    /// Applies one update from each parameter's accumulated gradient.
    /// Parameters without a gradient are treated as having a zero gradient;
    /// gradients themselves are left untouched.
    pub fn step(&mut self, params: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return shape_err(
                "adam_step",
                format!("{} parameters, state tracks {}", params.len(), self.first_moment.len()),
            );
        }
        for (i, p) in params.iter().enumerate() {
            if self.first_moment[i].len() != p.numel() {
                return shape_err(
                    "adam_step",
                    format!("parameter {i} has {} elements, moments {}", p.numel(), self.first_moment[i].len()),
                );
            }
        }
        self.step_count += 1;
        let c = self.config;
        let t = self.step_count as i32;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let bias1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let bias2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        let lr = T::from_f64_lossy(c.learning_rate);
        let eps = T::from_f64_lossy(c.epsilon);
        for (i, p) in params.iter().enumerate() {
            let g = p.grad();
            let (m, v) = (&mut self.first_moment[i], &mut self.second_moment[i]);
            match &g {
                Some(g) => {
                    for j in 0..g.len() {
                        m[j] = b1 * m[j] + (one - b1) * g[j];
                        v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                    }
                }
                None => {
                    m.iter_mut().for_each(|x| *x *= b1);
                    v.iter_mut().for_each(|x| *x *= b2);
                }
            }
            if m.iter().all(|x| *x == T::zero()) {
                continue;
            }
            p.update_data(|d| {
                for j in 0..d.len() {
                    d[j] -= lr * (m[j] / bias1) / ((v[j] / bias2).sqrt() + eps);
                }
            });
        }
        Ok(())
    }
}
