//! Learning reduced-order linear parameter-varying (LPV) state-space models of
//! nonlinear dynamical systems from trajectory data.
//!
//! The workflow is hierarchical:
//!
//! 1. [`projection`] fits a state projection `z = ψ(x)` with inverse `x ≈ ψ†(z)`:
//!    a PCA basis computed by SVD, corrected by a small autoencoder working on
//!    normalized states.
//! 2. [`lpvnn`] fits an affine LPV model on the reduced data in state-difference
//!    form, using a scheduling network `p = μ(z, u)` feeding a single linear layer
//!    whose output is reshaped into the matrix function `M_Δ(p)`. Training happens
//!    on scaled data; [`lpvnn::denormalize_model`] maps the result back exactly.
//! 3. [`rolpvm::RolpvModel`] is the resulting simulatable model
//!    `[z⁺; y] = M(p)·[z; u] + [z_o; y_o]`.
//!
//! [`datagen`] provides benchmark systems, RK4 discretization, excitation signals
//! and noise; [`metrics`] provides RMSE and best-fit-rate scores.

pub mod datagen;
pub mod error;
pub mod lpvnn;
pub mod metrics;
pub mod nncore;
pub mod projection;
pub mod rolpvm;

pub use error::{Error, Result};
