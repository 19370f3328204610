//! Minimal deterministic numerical kernel: dense matrices, thin SVD, tanh MLPs
//! with exact backpropagation, and the Adam optimizer.

pub mod adam;
pub mod matrix;
pub mod mlp;
pub mod rng;
pub mod svd;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use matrix::Matrix;
pub use mlp::{Activation, Layer, Mlp, Trace};
pub use rng::{seeded, Rng};
pub use svd::{svd_thin, Svd};
pub use train::{minimize, LossHistory, Objective, OptimizerConfig};
