//! Measuring how far trained feed-forward networks move from their random
//! initialization, and the capacity certificates that distance implies.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: dense `f64` matrices, Gaussian sampling, Frobenius and
//!   spectral norms.
//! - [`network`]: the `d`-layer network, Xavier initialization, the frozen
//!   initialization snapshot and the checkpoint format.
//! - [`data`]: MNIST / CIFAR-10 loaders and a synthetic cluster generator.
//! - [`training`]: backpropagation, SGD with momentum, stopping rules, label
//!   corruption.
//! - [`capacity`]: norm products and the output, gradient, spectral and linear
//!   Rademacher certificates.
//! - [`rademacher`]: Monte-Carlo estimates of the empirical Rademacher
//!   complexity of a distance ball by projected gradient ascent.
//! - [`concentration`]: simulation checks of the Gaussian concentration facts
//!   the certificates rely on.
//! - [`experiment`]: width / sample-size / noise sweeps, CSV records, power-law
//!   fits, checkpoint verification and SVG plots.

pub mod capacity;
pub mod concentration;
pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod network;
pub mod rademacher;
pub mod training;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, DenseVector, Rng};
pub use network::{Activation, InitSnapshot, NetParams, NetShape};
