//! Reverse-mode automatic differentiation for small convolutional networks.
//!
//! A [`Graph`] records operations on dense NCHW [`Tensor`]s as they run and
//! sweeps them backwards on demand. Parameters live in a [`ParamStore`] and
//! are bound into a graph by name; the graph's trainable set decides which
//! of them receive gradients. [`Adam`] consumes the resulting
//! [`Gradients`].
//!
//! The engine is generic over [`Scalar`] so the same model code runs in
//! `f32` for training and `f64` for finite-difference verification.

mod graph;
mod kernels;
mod optim;
mod params;
mod scalar;
mod tensor;

pub mod fd;

pub use graph::{Gradients, Graph, Var};
pub use optim::{Adam, AdamConfig, Moments};
pub use params::ParamStore;
pub use scalar::{gemm, Scalar};
pub use tensor::Tensor;
