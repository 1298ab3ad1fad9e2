//! Bit-exact integer model of a pipelined vision-transformer accelerator.
//!
//! The crate is organised bottom-up:
//!
//! * [`quant`] holds the integer tensor type, requantization and the
//!   batch-norm / LSQ re-parameterization helpers that turn float training
//!   parameters into integer pipeline constants.
//! * [`lut`] builds, calibrates and evaluates the lookup tables that replace
//!   every non-linear operator (Exp, GeLU+ReQuant, Recip, Rsqrt, ReQuant).
//! * [`vit`] is the integer forward pass (tiled matmul, patch-embed
//!   convolution, LayerNorm, Softmax, MHA/MLP blocks) together with a float
//!   reference model used as the correctness oracle.
//! * [`bundle`] reads and writes weight/tensor bundles on disk.

pub mod bundle;
pub mod error;
pub mod lut;
pub mod quant;
pub mod vit;

pub use error::{Error, Result};
