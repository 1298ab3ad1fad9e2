use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::bundle::{Bundle, Tensor};
use crate::quant::{clamp_bits, qrange, round_half_even, symmetric_scale};
use crate::{Error, Result};

/// Dense layer, `weight` is `out x inp` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub out: usize,
    pub inp: usize,
}

impl Linear {
    fn random(rng: &mut ChaCha8Rng, out: usize, inp: usize, bias_range: f64) -> Self {
        // uniform with variance 1/inp
        let a = (3.0 / inp as f64).sqrt();
        Self {
            weight: (0..out * inp).map(|_| f32_round(rng.gen_range(-a..a))).collect(),
            bias: (0..out).map(|_| f32_round(rng.gen_range(-bias_range..=bias_range))).collect(),
            out,
            inp,
        }
    }

    /// Per-tensor symmetric weight scale.
    pub fn weight_scale(&self, bits: u32) -> f64 {
        symmetric_scale(self.weight.iter().fold(0.0, |m, w| m.max(w.abs())), bits)
    }

    /// Integer weights on the grid of [`Linear::weight_scale`].
    pub fn quantized(&self, bits: u32) -> (Vec<i32>, f64) {
        let s = self.weight_scale(bits);
        (self.weight.iter().map(|w| clamp_bits(round_half_even(w / s) as i64, bits)).collect(), s)
    }

    fn fake_quant(&self, bits: u32) -> Self {
        let (q, s) = self.quantized(bits);
        Self {
            weight: q.iter().map(|&v| v as f64 * s).collect(),
            ..self.clone()
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out)
            .map(|o| {
                let w = &self.weight[o * self.inp..][..self.inp];
                self.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    /// Rows `0..CI` produce Q, then K, then V.
    pub qkv: Linear,
    pub proj: Linear,
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloatWeights {
    pub config: ModelConfig,
    /// Patch embedding as a linear map over `C x p x p` patches, which is
    /// the `C_out x C_in x K x K` convolution kernel flattened.
    pub patch: Linear,
    /// `T x CI` positional embedding.
    pub pos: Vec<f64>,
    pub cls: Option<Vec<f64>>,
    pub blocks: Vec<BlockWeights>,
    pub head: Linear,
}

impl FloatWeights {
    /// Deterministic random weights. Values are representable in `f32` so
    /// bundles round-trip exactly.
    pub fn random(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ci = config.embed;
        let patch = Linear::random(&mut rng, ci, config.patch_dim(), 0.1);
        let pos = (0..config.tokens * ci).map(|_| f32_round(rng.gen_range(-0.5..0.5))).collect();
        let cls = config
            .class_token
            .then(|| (0..ci).map(|_| f32_round(rng.gen_range(-1.0..1.0))).collect());
        let blocks = (0..config.blocks)
            .map(|_| BlockWeights {
                qkv: Linear::random(&mut rng, 3 * ci, ci, 0.1),
                proj: Linear::random(&mut rng, ci, ci, 0.1),
                fc1: Linear::random(&mut rng, config.mlp_hidden, ci, 0.1),
                fc2: Linear::random(&mut rng, ci, config.mlp_hidden, 0.1),
            })
            .collect();
        let head = Linear::random(&mut rng, config.classes, ci, 0.1);
        Ok(Self {
            config: config.clone(),
            patch,
            pos,
            cls,
            blocks,
            head,
        })
    }

    /// Copy with every weight matrix replaced by its dequantized integer
    /// version; biases and embeddings stay real.
    pub fn fake_quant(&self) -> Self {
        let bits = self.config.weight_bits;
        Self {
            patch: self.patch.fake_quant(bits),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockWeights {
                    qkv: b.qkv.fake_quant(bits),
                    proj: b.proj.fake_quant(bits),
                    fc1: b.fc1.fake_quant(bits),
                    fc2: b.fc2.fake_quant(bits),
                })
                .collect(),
            head: self.head.fake_quant(bits),
            ..self.clone()
        }
    }

    fn linears(&self) -> Vec<(String, &Linear)> {
        let mut v = vec![("patch".to_string(), &self.patch)];
        for (i, b) in self.blocks.iter().enumerate() {
            for (n, l) in [("qkv", &b.qkv), ("proj", &b.proj), ("fc1", &b.fc1), ("fc2", &b.fc2)] {
                v.push((format!("blocks.{i}.{n}"), l));
            }
        }
        v.push(("head".to_string(), &self.head));
        v
    }

    pub fn to_bundle(&self) -> Result<Bundle> {
        let mut b = Bundle::default();
        for (name, l) in self.linears() {
            b.insert(format!("{name}.weight"), Tensor::f32(vec![l.out, l.inp], l.weight.iter().copied()));
            b.insert(format!("{name}.bias"), Tensor::f32(vec![l.out], l.bias.iter().copied()));
        }
        b.insert("pos", Tensor::f32(vec![self.config.tokens, self.config.embed], self.pos.iter().copied()));
        if let Some(cls) = &self.cls {
            b.insert("cls", Tensor::f32(vec![self.config.embed], cls.iter().copied()));
        }
        b.metadata.insert("config".into(), serde_json::to_value(&self.config)?);
        Ok(b)
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<Self> {
        let config: ModelConfig = serde_json::from_value(
            bundle
                .metadata
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Format("weight bundle has no `config` metadata".into()))?,
        )?;
        config.validate()?;
        let ci = config.embed;
        let read = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let t = bundle.get(name)?;
            if t.shape != shape {
                return Err(Error::ShapeMismatch(format!("`{name}`: expected {shape:?}, found {:?}", t.shape)));
            }
            Ok(t.to_f64())
        };
        let linear = |name: &str, out: usize, inp: usize| -> Result<Linear> {
            Ok(Linear {
                weight: read(&format!("{name}.weight"), &[out, inp])?,
                bias: read(&format!("{name}.bias"), &[out])?,
                out,
                inp,
            })
        };
        let blocks = (0..config.blocks)
            .map(|i| {
                Ok(BlockWeights {
                    qkv: linear(&format!("blocks.{i}.qkv"), 3 * ci, ci)?,
                    proj: linear(&format!("blocks.{i}.proj"), ci, ci)?,
                    fc1: linear(&format!("blocks.{i}.fc1"), config.mlp_hidden, ci)?,
                    fc2: linear(&format!("blocks.{i}.fc2"), ci, config.mlp_hidden)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            patch: linear("patch", ci, config.patch_dim())?,
            pos: read("pos", &[config.tokens, ci])?,
            cls: if config.class_token { Some(read("cls", &[ci])?) } else { None },
            blocks,
            head: linear("head", config.classes, ci)?,
            config,
        })
    }
}

/// Deterministic synthetic images with values in `[-1, 1]`: smooth
/// per-channel gradients plus uniform noise.
pub fn synthetic_images(config: &ModelConfig, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (config.image_height, config.image_width);
    (0..count)
        .map(|_| {
            let mut img = Vec::with_capacity(config.image_len());
            for _ in 0..config.in_channels {
                let (gx, gy, off): (f64, f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.3..0.3));
                for y in 0..h {
                    for x in 0..w {
                        let base = off + 0.5 * (gx * x as f64 / w as f64 + gy * y as f64 / h as f64);
                        img.push((base + rng.gen_range(-0.4..0.4)).clamp(-1.0, 1.0));
                    }
                }
            }
            img
        })
        .collect()
}

/// Symmetric scale of an image with values in `[-1, 1]`.
pub fn image_scale(bits: u32) -> f64 {
    1.0 / qrange(bits).1 as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_is_deterministic() {
        let c = ModelConfig::toy();
        assert_eq!(FloatWeights::random(&c, 1).unwrap(), FloatWeights::random(&c, 1).unwrap());
        assert_ne!(FloatWeights::random(&c, 1).unwrap(), FloatWeights::random(&c, 2).unwrap());
    }

    #[test]
    fn fake_quant_is_idempotent_on_grid() {
        let w = FloatWeights::random(&ModelConfig::toy(), 3).unwrap().fake_quant();
        let (q1, s1) = w.blocks[0].fc1.quantized(4);
        let again = w.fake_quant();
        let (q2, _) = again.blocks[0].fc1.quantized(4);
        assert_eq!(q1, q2);
        assert!(q1.iter().all(|v| (-8..=7).contains(v)));
        assert!(s1 > 0.0);
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = ModelConfig::toy().with_class_token(true);
        let w = FloatWeights::random(&c, 5).unwrap();
        w.to_bundle().unwrap().write(dir.path()).unwrap();
        let back = FloatWeights::from_bundle(&Bundle::read(dir.path()).unwrap()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn synthetic_images_in_range() {
        let c = ModelConfig::toy();
        let imgs = synthetic_images(&c, 3, 9);
        assert_eq!(imgs.len(), 3);
        assert!(imgs.iter().all(|i| i.len() == c.image_len() && i.iter().all(|v| v.abs() <= 1.0)));
    }
}
