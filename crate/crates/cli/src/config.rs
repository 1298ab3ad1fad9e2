//! Run configuration: an optional TOML file with command-line overrides.

use std::path::{Path, PathBuf};

use hgpipe_core::vit::{BitRegime, ModelConfig};
use hgpipe_resource::ParallelismConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_CLOCK_HZ: f64 = 425e6;
pub const DEFAULT_PRESET: &str = "deit-tiny";

/// Settings shared by every command. Every field is optional so a file and
/// the flags can be layered; flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `deit-tiny`, `deit-small` or `toy`.
    pub preset: Option<String>,
    /// Model shape file (TOML), instead of a preset.
    pub model: Option<PathBuf>,
    pub bits: Option<BitRegime>,
    /// Parallelism file (TOML); derived from the model when absent.
    pub parallelism: Option<PathBuf>,
    pub clock_hz: Option<f64>,
    /// Float weight bundle; seeded random weights when absent.
    pub weights: Option<PathBuf>,
    /// Calibration sample bundle with an `images` tensor.
    pub samples: Option<PathBuf>,
    /// Output directory.
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| CliError::domain(format!("run config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.preset.is_some() && self.model.is_some() {
            return Err(CliError::usage("`preset` and `model` are mutually exclusive"));
        }
        if let Some(p) = &self.preset {
            ModelConfig::preset(p)?;
        }
        if let Some(hz) = self.clock_hz {
            if !(hz > 0.0 && hz.is_finite()) {
                return Err(CliError::domain(format!("clock_hz must be positive, got {hz}")));
            }
        }
        Ok(())
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn merge(self, flags: RunConfig) -> Self {
        // a flag preset or model replaces either one from the file
        let (preset, model) = if flags.preset.is_some() || flags.model.is_some() {
            (flags.preset, flags.model)
        } else {
            (self.preset, self.model)
        };
        Self {
            preset,
            model,
            bits: flags.bits.or(self.bits),
            parallelism: flags.parallelism.or(self.parallelism),
            clock_hz: flags.clock_hz.or(self.clock_hz),
            weights: flags.weights.or(self.weights),
            samples: flags.samples.or(self.samples),
            out: flags.out.or(self.out),
            seed: flags.seed.or(self.seed),
        }
    }

    /// Model shape after preset/file selection and the bit regime.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut m = match (&self.preset, &self.model) {
            (_, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                toml::from_str(&text).map_err(|e| CliError::domain(format!("{}: {e}", path.display())))?
            }
            (Some(p), None) => ModelConfig::preset(p)?,
            (None, None) => ModelConfig::preset(DEFAULT_PRESET)?,
        };
        if let Some(b) = self.bits {
            m = m.with_regime(b);
        }
        m.validate()?;
        Ok(m)
    }

    /// Parallelism for `model`, checked against its shape and weight width.
    pub fn parallelism_config(&self, model: &ModelConfig) -> Result<ParallelismConfig> {
        let p = match &self.parallelism {
            Some(path) => {
                let p = ParallelismConfig::load(path)?;
                if p.weight_bits != model.weight_bits {
                    return Err(CliError::domain(format!(
                        "parallelism file has weight_bits {}, model has {}",
                        p.weight_bits, model.weight_bits
                    )));
                }
                p
            }
            None => {
                let mut p = ParallelismConfig::for_model(model)?;
                p.weight_bits = model.weight_bits;
                p
            }
        };
        if let Some(s) = p.stages.iter().find(|s| s.t != model.tokens) {
            return Err(CliError::domain(format!(
                "stage `{}` has T = {}, model has {} tokens",
                s.name, s.t, model.tokens
            )));
        }
        Ok(p)
    }

    pub fn clock(&self) -> f64 {
        self.clock_hz.unwrap_or(DEFAULT_CLOCK_HZ)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("hgpipe-out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win() {
        let file = RunConfig::from_toml("preset = \"deit-small\"\nbits = \"a3w3\"\nseed = 4\n").unwrap();
        let flags = RunConfig {
            bits: Some(BitRegime::A8W8),
            ..RunConfig::default()
        };
        let m = file.merge(flags);
        assert_eq!(m.preset.as_deref(), Some("deit-small"));
        assert_eq!(m.bits, Some(BitRegime::A8W8));
        assert_eq!(m.seed(), 4);
        let c = m.model_config().unwrap();
        assert_eq!((c.embed, c.act_bits), (384, 8));
    }

    #[test]
    fn flag_model_replaces_file_preset() {
        let file = RunConfig::from_toml("preset = \"toy\"").unwrap();
        let m = file.merge(RunConfig {
            preset: Some("deit-tiny".into()),
            ..RunConfig::default()
        });
        assert_eq!(m.model_config().unwrap().embed, 192);
    }

    #[test]
    fn rejects_bad_files() {
        for text in [
            "preset = \"resnet\"",
            "bits = \"a5w5\"",
            "colour = 1",
            "clock_hz = -1.0",
            "preset = \"toy\"\nmodel = \"m.toml\"",
        ] {
            assert!(RunConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn default_parallelism_follows_model() {
        let c = RunConfig::default();
        let m = c.model_config().unwrap();
        let p = c.parallelism_config(&m).unwrap();
        assert_eq!(p.iis().unwrap().iter().max(), Some(&57624));
        let toy = RunConfig {
            preset: Some("toy".into()),
            ..RunConfig::default()
        };
        let m = toy.model_config().unwrap();
        assert!(toy.parallelism_config(&m).unwrap().stages.iter().all(|s| s.t == 8));
    }
}
