//! Double DQN with Swin-MLP and convolutional Q-network backbones, desk-scale
//! pixel environments, replay memory and evaluation metrics.

pub mod activation;
pub mod agent;
pub mod checkpoint;
pub mod cnn;
pub mod config;
pub mod env;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod persist;
pub mod qnet;
pub mod replay;
pub mod swin;
pub mod tabular;

pub use error::{Error, Result};
