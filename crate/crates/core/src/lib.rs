//! Sparse-activation generator network.
//!
//! A top-down ConvNet whose feature maps are sparsified by a whole-tensor Top-K followed
//! by ReLU, learned by Langevin posterior inference over the latent vector and Monte-Carlo
//! maximum likelihood. Freezing the Top-K/ReLU masks of one forward pass linearizes the
//! network, which turns every surviving activation into a sparse-coding coefficient with
//! its own basis and groups the activations into an AND-OR parse graph.

pub mod descriptor;
pub mod error;
pub mod generator;
pub mod grad_check;
pub mod grammar;
pub mod inference;
pub mod io;
pub mod ops;
pub mod rng;
pub mod tensor;
pub mod viz;

pub use error::{CheckpointError, Error, Result};
pub use generator::{ForwardTrace, Generator, GeneratorConfig, GeneratorParams};
pub use tensor::Tensor;
