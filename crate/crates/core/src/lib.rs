//! Contrastive learning as coordinate-wise optimization.
//!
//! The crate is organised around the two players of the pair-weighted
//! formulation:
//!
//! - [`loss_family`]: the `L_{φ,ψ}` loss family and batch distance geometry.
//! - [`importance`]: the pairwise importance `α` (the min player), computed
//!   from the loss gradient, from regularised minimisation, or set directly.
//! - [`energy`]: the contrastive covariance `C_α` and the energy
//!   `E_α = ½ tr C_α[z, z]` (the max player's objective).
//! - [`grad_engine`]: output-level gradients, a small reversible MLP encoder
//!   with normalisation heads, and the α-CL update step.
//! - [`deep_linear`]: gradient flow of deep linear networks on the
//!   Frobenius sphere and its PCA fixed points.
//! - [`relu_dynamics`]: orthogonal-mixture data and two-layer ReLU dynamics
//!   under the sticky-weight rule.
//! - [`toy_trainer`]: desk-scale comparison of loss variants with a linear
//!   probe.
//!
//! All arithmetic is `f64`. Matrices are `ndarray::Array2<f64>` with samples
//! in rows.

pub mod deep_linear;
pub mod energy;
pub mod error;
pub mod export;
pub mod grad_engine;
pub mod importance;
pub mod linalg;
pub mod loss_family;
pub mod relu_dynamics;
pub mod rng;
pub mod toy_trainer;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
