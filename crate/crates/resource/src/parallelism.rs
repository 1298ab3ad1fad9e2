//! Per-stage tiling of one transformer block.

use std::path::Path;

use hgpipe_core::vit::{ModelConfig, TiledMatmulSpec, WeightSource};
use serde::{Deserialize, Serialize};

use crate::cost::{bram_count_and_efficiency, stage_ii, BramSpec, BramUsage};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    LayerNorm,
    Matmul,
    Softmax,
    ResidualAdd,
    Gelu,
}

impl StageKind {
    /// Passes over the input per output: LayerNorm and Softmax read their
    /// row three times.
    pub fn passes(self) -> u64 {
        match self {
            StageKind::LayerNorm | StageKind::Softmax => 3,
            _ => 1,
        }
    }

    pub fn is_matmul(self) -> bool {
        self == StageKind::Matmul
    }
}

/// Tiling of one pipeline stage. Elementwise and reduction stages have
/// `co = cop = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageParallelism {
    pub name: String,
    pub label: String,
    pub kind: StageKind,
    pub t: usize,
    pub ci: usize,
    #[serde(default = "one")]
    pub co: usize,
    pub tp: usize,
    pub cip: usize,
    #[serde(default = "one")]
    pub cop: usize,
    /// Copies running side by side, e.g. one per head.
    #[serde(default = "one")]
    pub instances: usize,
    #[serde(default = "static_weights")]
    pub weights: WeightSource,
}

fn one() -> usize {
    1
}

fn static_weights() -> WeightSource {
    WeightSource::Static
}

impl StageParallelism {
    pub fn spec(&self) -> Result<TiledMatmulSpec> {
        let mut s = TiledMatmulSpec::new(self.t, self.ci, self.co, self.tp, self.cip, self.cop)?;
        s.weights = self.weights;
        Ok(s)
    }

    pub fn ii(&self) -> Result<u64> {
        Ok(stage_ii(&self.spec()?, self.kind.passes()))
    }

    /// Trip count over the sequence, i.e. firings per image.
    pub fn tt(&self) -> usize {
        self.t / self.tp
    }

    /// `TP * CIP * COP`.
    pub fn parallelism(&self) -> usize {
        self.tp * self.cip * self.cop
    }

    /// Operations per image of one instance, in millions: `T * CI * CO`
    /// for matmuls and `T * CI * passes` otherwise.
    pub fn mops(&self) -> f64 {
        let inner = if self.kind.is_matmul() { self.co as u64 } else { self.kind.passes() };
        (self.t as u64 * self.ci as u64 * inner) as f64 / 1e6
    }

    /// Weight BRAM usage for static-weight matmuls.
    pub fn bram(&self, weight_bits: u32, bram: BramSpec) -> Result<Option<BramUsage>> {
        if !self.kind.is_matmul() || self.weights == WeightSource::Dynamic {
            return Ok(None);
        }
        let s = self.spec()?;
        Ok(Some(bram_count_and_efficiency(
            weight_bits as u64,
            s.cip as u64,
            s.cop as u64,
            s.cit as u64,
            s.cot as u64,
            bram,
        )?))
    }
}

/// Tiling of every stage in one block, in dataflow order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelismConfig {
    pub weight_bits: u32,
    /// Number of identical blocks in the model.
    pub blocks: usize,
    #[serde(rename = "stage")]
    pub stages: Vec<StageParallelism>,
}

/// Stage names, in dataflow order.
pub const STAGE_NAMES: [&str; 11] = ["ln1", "qkv", "qk", "softmax", "rv", "proj", "res_add1", "ln2", "mm1", "gelu", "mm2"];

const LABELS: [&str; 11] = [
    "LayerNorm",
    "QKV Gen",
    "QK MatMul",
    "Softmax",
    "RV MatMul",
    "Output Proj",
    "Residual Add",
    "LayerNorm",
    "MatMul1",
    "GeLU",
    "MatMul2",
];

struct Shape {
    kind: StageKind,
    ci: usize,
    co: usize,
    instances: usize,
    weights: WeightSource,
}

fn shapes(m: &ModelConfig) -> [Shape; 11] {
    use StageKind::*;
    use WeightSource::*;
    let (t, c, h, d, f) = (m.tokens, m.embed, m.heads, m.head_dim, m.mlp_hidden);
    let s = |kind, ci, co, instances, weights| Shape {
        kind,
        ci,
        co,
        instances,
        weights,
    };
    [
        s(LayerNorm, c, 1, 1, Static),
        s(Matmul, c, d, 3 * h, Static),
        s(Matmul, d, t, h, Dynamic),
        s(Softmax, t, 1, h, Static),
        s(Matmul, t, d, h, Dynamic),
        s(Matmul, c, c, 1, Static),
        s(ResidualAdd, c, 1, 1, Static),
        s(LayerNorm, c, 1, 1, Static),
        s(Matmul, c, f, 1, Static),
        s(Gelu, f, 1, 1, Static),
        s(Matmul, f, c, 1, Static),
    ]
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n % d == 0).collect()
}

impl ParallelismConfig {
    /// The published DeiT-tiny design.
    pub fn deit_tiny() -> Self {
        let m = ModelConfig::deit_tiny();
        // (CIP, COP) per stage; TP = 2 everywhere
        let p = [(1, 1), (6, 4), (4, 7), (1, 1), (7, 4), (12, 6), (1, 1), (1, 1), (12, 24), (2, 1), (24, 12)];
        let stages = shapes(&m)
            .into_iter()
            .zip(p)
            .enumerate()
            .map(|(i, (s, (cip, cop)))| StageParallelism {
                name: STAGE_NAMES[i].into(),
                label: LABELS[i].into(),
                kind: s.kind,
                t: m.tokens,
                ci: s.ci,
                co: s.co,
                tp: 2,
                cip,
                cop,
                instances: s.instances,
                weights: s.weights,
            })
            .collect();
        Self {
            weight_bits: m.weight_bits,
            blocks: m.blocks,
            stages,
        }
    }

    /// Balanced design for any model: the Softmax row with `CIP = 1` sets
    /// the target II and every other stage takes the smallest parallelism
    /// meeting it, preferring higher BRAM efficiency on ties.
    pub fn balanced(model: &ModelConfig, tp: usize) -> Result<Self> {
        model.validate()?;
        if tp == 0 || model.tokens % tp != 0 {
            return Err(Error::invalid(format!("TP {tp} does not divide {} tokens", model.tokens)));
        }
        let tt = (model.tokens / tp) as u64;
        let target = 3 * tt * model.tokens as u64;
        let bram = BramSpec::default();
        let stages = shapes(model)
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut best: Option<(usize, std::cmp::Reverse<u64>, StageParallelism)> = None;
                for cip in divisors(s.ci) {
                    let cops = if s.kind.is_matmul() { divisors(s.co) } else { vec![1] };
                    for cop in cops {
                        let st = StageParallelism {
                            name: STAGE_NAMES[i].into(),
                            label: LABELS[i].into(),
                            kind: s.kind,
                            t: model.tokens,
                            ci: s.ci,
                            co: s.co,
                            tp,
                            cip,
                            cop,
                            instances: s.instances,
                            weights: s.weights,
                        };
                        if st.ii()? > target {
                            continue;
                        }
                        let eta = st.bram(model.weight_bits, bram)?.map_or(0, |b| (b.efficiency * 1e6) as u64);
                        let key = (st.parallelism(), std::cmp::Reverse(eta));
                        if best.as_ref().map_or(true, |(p, e, _)| key < (*p, *e)) {
                            best = Some((key.0, key.1, st));
                        }
                    }
                }
                best.map(|b| b.2)
                    .ok_or_else(|| Error::invalid(format!("no tiling of `{}` meets II {target}", STAGE_NAMES[i])))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weight_bits: model.weight_bits,
            blocks: model.blocks,
            stages,
        })
    }

    /// Published design for DeiT-tiny, balanced design otherwise.
    pub fn for_model(model: &ModelConfig) -> Result<Self> {
        let mut tiny = ModelConfig::deit_tiny();
        tiny.act_bits = model.act_bits;
        tiny.weight_bits = model.weight_bits;
        tiny.tables = model.tables;
        if *model == tiny {
            let mut p = Self::deit_tiny();
            p.weight_bits = model.weight_bits;
            Ok(p)
        } else {
            Self::balanced(model, 2)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("parallelism config serializes")
    }

    /// Checks bit width, names and the divisibility of every stage.
    pub fn validate(&self) -> Result<()> {
        if !(1..=32).contains(&self.weight_bits) {
            return Err(Error::invalid(format!("weight_bits {} outside 1..=32", self.weight_bits)));
        }
        if self.stages.is_empty() {
            return Err(Error::invalid("parallelism config has no stages"));
        }
        if self.blocks == 0 {
            return Err(Error::invalid("blocks must be positive"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if self.stages[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::invalid(format!("duplicate stage `{}`", s.name)));
            }
            if s.instances == 0 {
                return Err(Error::invalid(format!("stage `{}` has zero instances", s.name)));
            }
            if !s.kind.is_matmul() && (s.co != 1 || s.cop != 1) {
                return Err(Error::invalid(format!("non-matmul stage `{}` must have co = cop = 1", s.name)));
            }
            s.spec()?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&StageParallelism> {
        self.stages
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::UnknownStage(name.into()))
    }

    pub fn iis(&self) -> Result<Vec<u64>> {
        self.stages.iter().map(|s| s.ii()).collect()
    }

    /// Checks that every stage of the standard block is present.
    pub fn require_block_stages(&self) -> Result<()> {
        for name in STAGE_NAMES {
            self.get(name)?;
        }
        Ok(())
    }
}
