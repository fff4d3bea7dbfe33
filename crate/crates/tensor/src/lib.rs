//! Dense CPU tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] records the operation that produced it whenever graph
//! recording is enabled and one of its inputs requires a gradient.
//! [`Tensor::backward`] walks that graph once in reverse topological order
//! and accumulates gradients into every reachable tensor that requires one.
//!
//! Everything the Q-network backbones need is here: valid convolution,
//! grouped token mixing, linear layers, batched matmul, layer norm,
//! softmax, the Smooth L1 loss and the Adam optimizer.

mod element;
mod error;
pub mod gradcheck;
pub mod ops;
mod optim;
mod tensor;

pub use element::{gemm, DType, Element, MatLayout};
pub use error::{Result, TensorError};
pub use ops::{argmax, conv2d, grouped_conv1d_mix, layer_norm, smooth_l1, softmax};
pub use optim::{AdamConfig, AdamState};
pub use tensor::{grad_enabled, no_grad, NoGradGuard, Tensor};
