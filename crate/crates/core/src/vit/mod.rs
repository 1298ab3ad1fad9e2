//! Integer ViT forward pass and its float reference.

pub mod config;
pub mod count;
pub mod float;
pub mod matmul;
pub mod model;
pub mod ops;
pub mod oracle;
pub mod trace;
pub mod weights;

pub use config::{BitRegime, ConvSpec, ModelConfig, TableConfig, TiledMatmulSpec, WeightSource};
pub use count::OpCount;
pub use float::forward_float;
pub use matmul::{conv_step3macs, tiled_matmul_os};
pub use model::{argmax, mha_block, mlp_block, IntModel, Logits, RunStats, TableKind};
pub use ops::{layernorm_int, softmax_int, SoftmaxRow};
pub use trace::{compare, SiteError, Trace};
pub use weights::{synthetic_images, FloatWeights};

#[cfg(test)]
mod tests;
