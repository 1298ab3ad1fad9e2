pub mod analyze;
pub mod infer;
pub mod simulate;
pub mod tables;

use std::path::Path;

use hgpipe_core::bundle::Bundle;
use hgpipe_core::vit::{synthetic_images, FloatWeights, ModelConfig};
use log::info;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Weights from the configured bundle, or seeded random weights. A bundle
/// must match the model shape; the bit regime and table settings come from
/// the run config.
pub(crate) fn load_weights(cfg: &RunConfig, model: &ModelConfig) -> Result<FloatWeights> {
    let Some(dir) = &cfg.weights else {
        info!("random weights, seed {}", cfg.seed());
        return Ok(FloatWeights::random(model, cfg.seed())?);
    };
    let mut w = FloatWeights::from_bundle(&Bundle::read(dir)?)?;
    let shape = |m: &ModelConfig| {
        (
            m.tokens,
            m.embed,
            m.heads,
            m.head_dim,
            m.mlp_hidden,
            m.blocks,
            m.in_channels,
            m.image_height,
            m.image_width,
            m.patch,
            m.classes,
            m.class_token,
        )
    };
    if shape(&w.config) != shape(model) {
        return Err(CliError::domain(format!(
            "weights in {} do not match the model shape",
            dir.display()
        )));
    }
    w.config = model.clone();
    Ok(w)
}

/// Rows of the `name` tensor of a bundle, each `image_len` values long.
pub(crate) fn load_images(dir: &Path, name: &str, model: &ModelConfig) -> Result<Vec<Vec<f64>>> {
    let b = Bundle::read(dir)?;
    let values = b.get(name)?.to_f64();
    let len = model.image_len();
    if values.is_empty() || values.len() % len != 0 {
        return Err(CliError::domain(format!(
            "tensor `{name}` in {} has {} values, not a multiple of the image size {len}",
            dir.display(),
            values.len()
        )));
    }
    Ok(values.chunks(len).map(<[f64]>::to_vec).collect())
}

/// Calibration images from the sample bundle, or synthetic ones when
/// `synthetic` is set. Neither is a usage error.
pub(crate) fn calibration_images(cfg: &RunConfig, model: &ModelConfig, synthetic: bool, count: usize) -> Result<Vec<Vec<f64>>> {
    match (&cfg.samples, synthetic) {
        (Some(_), true) => Err(CliError::usage("--samples and --synthetic are mutually exclusive")),
        (Some(dir), false) => load_images(dir, "images", model),
        (None, true) => {
            if count == 0 {
                return Err(CliError::usage("--images must be at least 1"));
            }
            Ok(synthetic_images(model, count, cfg.seed().wrapping_add(1)))
        }
        (None, false) => Err(CliError::usage("calibration needs --samples <bundle> or --synthetic")),
    }
}
