use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Activation and weight widths of a quantization regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitRegime {
    A4W4,
    A3W3,
    A8W8,
}

impl BitRegime {
    pub fn act_bits(self) -> u32 {
        match self {
            BitRegime::A4W4 => 4,
            BitRegime::A3W3 => 3,
            BitRegime::A8W8 => 8,
        }
    }

    pub fn weight_bits(self) -> u32 {
        self.act_bits()
    }
}

impl std::str::FromStr for BitRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a4w4" => Ok(BitRegime::A4W4),
            "a3w3" => Ok(BitRegime::A3W3),
            "a8w8" => Ok(BitRegime::A8W8),
            _ => Err(Error::invalid(format!("unknown bit regime `{s}` (a4w4, a3w3, a8w8)"))),
        }
    }
}

/// Table widths shared by every block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableConfig {
    pub addr_bits: u32,
    pub exp_bits: u32,
    pub recip_bits: u32,
    pub rsqrt_bits: u32,
    pub ln_eps: f64,
    pub max_calibration_iters: usize,
    /// Narrow GeLU table ranges with joint range calibration.
    pub joint_calibration: bool,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            addr_bits: 6,
            exp_bits: 8,
            recip_bits: 8,
            rsqrt_bits: 12,
            ln_eps: 1e-5,
            max_calibration_iters: crate::lut::DEFAULT_MAX_ITERS,
            joint_calibration: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Sequence length, class token included when enabled.
    pub tokens: usize,
    pub embed: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub mlp_hidden: usize,
    pub blocks: usize,
    pub act_bits: u32,
    pub weight_bits: u32,
    pub in_channels: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub patch: usize,
    pub classes: usize,
    #[serde(default)]
    pub class_token: bool,
    #[serde(default)]
    pub tables: TableConfig,
}

impl ModelConfig {
    pub fn deit_tiny() -> Self {
        Self::deit(192, 3)
    }

    pub fn deit_small() -> Self {
        Self::deit(384, 6)
    }

    fn deit(embed: usize, heads: usize) -> Self {
        Self {
            tokens: 196,
            embed,
            heads,
            head_dim: 64,
            mlp_hidden: 4 * embed,
            blocks: 12,
            act_bits: 4,
            weight_bits: 4,
            in_channels: 3,
            image_height: 224,
            image_width: 224,
            patch: 16,
            classes: 1000,
            class_token: false,
            tables: TableConfig::default(),
        }
    }

    /// Small shape for exhaustive testing: 8 tokens of width 12, two blocks.
    pub fn toy() -> Self {
        Self {
            tokens: 8,
            embed: 12,
            heads: 2,
            head_dim: 6,
            mlp_hidden: 24,
            blocks: 2,
            act_bits: 4,
            weight_bits: 4,
            in_channels: 3,
            image_height: 8,
            image_width: 16,
            patch: 4,
            classes: 10,
            class_token: false,
            tables: TableConfig::default(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "deit-tiny" => Ok(Self::deit_tiny()),
            "deit-small" => Ok(Self::deit_small()),
            "toy" => Ok(Self::toy()),
            _ => Err(Error::invalid(format!("unknown preset `{name}` (deit-tiny, deit-small, toy)"))),
        }
    }

    pub fn with_regime(mut self, regime: BitRegime) -> Self {
        self.act_bits = regime.act_bits();
        self.weight_bits = regime.weight_bits();
        self
    }

    /// Toggles the class token, adjusting the sequence length.
    pub fn with_class_token(mut self, on: bool) -> Self {
        if on != self.class_token {
            self.class_token = on;
            self.tokens = self.patch_tokens() + on as usize;
        }
        self
    }

    pub fn patch_tokens(&self) -> usize {
        if self.patch == 0 {
            return 0;
        }
        (self.image_height / self.patch) * (self.image_width / self.patch)
    }

    pub fn patch_dim(&self) -> usize {
        self.in_channels * self.patch * self.patch
    }

    pub fn image_len(&self) -> usize {
        self.in_channels * self.image_height * self.image_width
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tokens", self.tokens),
            ("embed", self.embed),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
            ("mlp_hidden", self.mlp_hidden),
            ("in_channels", self.in_channels),
            ("patch", self.patch),
            ("classes", self.classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if self.heads * self.head_dim != self.embed {
            return Err(Error::invalid(format!(
                "embed {} != heads {} * head_dim {}",
                self.embed, self.heads, self.head_dim
            )));
        }
        if self.embed < 2 {
            return Err(Error::invalid("LayerNorm needs embed >= 2"));
        }
        if self.image_height % self.patch != 0 || self.image_width % self.patch != 0 {
            return Err(Error::invalid(format!(
                "image {}x{} is not a multiple of patch {}",
                self.image_height, self.image_width, self.patch
            )));
        }
        let expected = self.patch_tokens() + self.class_token as usize;
        if expected != self.tokens {
            return Err(Error::invalid(format!(
                "tokens {} != {} patches{}",
                self.tokens,
                self.patch_tokens(),
                if self.class_token { " + class token" } else { "" }
            )));
        }
        for (name, bits) in [("act_bits", self.act_bits), ("weight_bits", self.weight_bits)] {
            if !(2..=8).contains(&bits) {
                return Err(Error::invalid(format!("{name} {bits} outside 2..=8")));
            }
        }
        let t = &self.tables;
        if !(1..=20).contains(&t.addr_bits) {
            return Err(Error::invalid("table addr_bits outside 1..=20"));
        }
        for (name, bits) in [("exp_bits", t.exp_bits), ("recip_bits", t.recip_bits), ("rsqrt_bits", t.rsqrt_bits)] {
            if !(2..=16).contains(&bits) {
                return Err(Error::invalid(format!("table {name} {bits} outside 2..=16")));
            }
        }
        if !(t.ln_eps > 0.0 && t.ln_eps.is_finite()) {
            return Err(Error::invalid("ln_eps must be positive"));
        }
        if t.max_calibration_iters == 0 {
            return Err(Error::invalid("max_calibration_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightSource {
    /// Frozen weights stored on chip.
    Static,
    /// Operand produced at run time (Q, K, V).
    Dynamic,
}

/// Parallelism and trip counts of an output-stationary matmul.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TiledMatmulSpec {
    pub tp: usize,
    pub cip: usize,
    pub cop: usize,
    pub tt: usize,
    pub cit: usize,
    pub cot: usize,
    pub weights: WeightSource,
}

pub(crate) fn split(what: &'static str, total: usize, parallelism: usize) -> Result<usize> {
    if parallelism == 0 || total == 0 || total % parallelism != 0 {
        return Err(Error::Tiling {
            what,
            total,
            parallelism,
        });
    }
    Ok(total / parallelism)
}

impl TiledMatmulSpec {
    pub fn new(t: usize, ci: usize, co: usize, tp: usize, cip: usize, cop: usize) -> Result<Self> {
        Ok(Self {
            tt: split("T", t, tp)?,
            cit: split("CI", ci, cip)?,
            cot: split("CO", co, cop)?,
            tp,
            cip,
            cop,
            weights: WeightSource::Static,
        })
    }

    pub fn dynamic(mut self) -> Self {
        self.weights = WeightSource::Dynamic;
        self
    }

    /// Fully serial schedule.
    pub fn serial(t: usize, ci: usize, co: usize) -> Result<Self> {
        Self::new(t, ci, co, 1, 1, 1)
    }

    pub fn t(&self) -> usize {
        self.tt * self.tp
    }

    pub fn ci(&self) -> usize {
        self.cit * self.cip
    }

    pub fn co(&self) -> usize {
        self.cot * self.cop
    }
}

/// Tiling of the patch-embedding convolution.
///
/// `hop`/`wop` are output rows/columns computed in parallel, `cip`/`cop`
/// input/output channel parallelism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub hop: usize,
    pub wop: usize,
    pub cip: usize,
    pub cop: usize,
}

impl ConvSpec {
    pub fn out_height(&self) -> usize {
        (self.height - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width - self.kernel) / self.stride + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::invalid("kernel and stride must be positive"));
        }
        if self.kernel > self.height || self.kernel > self.width {
            return Err(Error::invalid(format!(
                "kernel {} larger than input {}x{}",
                self.kernel, self.height, self.width
            )));
        }
        split("H_out", self.out_height(), self.hop)?;
        split("W_out", self.out_width(), self.wop)?;
        split("C_in", self.in_channels, self.cip)?;
        split("C_out", self.out_channels, self.cop)?;
        Ok(())
    }
}
