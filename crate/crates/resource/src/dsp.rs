//! DSP cost of non-linear operators built from arithmetic units.

use serde::{Deserialize, Serialize};

use crate::parallelism::{ParallelismConfig, StageKind};
use crate::Result;

/// Per-unit cost of each non-linear function, as arithmetic (`*_dsp`,
/// `*_lut`) and as a lookup table (`*_table_lut`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostTable {
    pub exp_dsp: u64,
    pub rsqrt_dsp: u64,
    pub recip_dsp: u64,
    pub gelu_dsp: u64,
    pub requant_dsp: u64,
    pub exp_lut: u64,
    pub rsqrt_lut: u64,
    pub recip_lut: u64,
    pub gelu_lut: u64,
    pub requant_lut: u64,
    pub exp_table_lut: u64,
    pub rsqrt_table_lut: u64,
    pub recip_table_lut: u64,
    pub gelu_table_lut: u64,
    pub requant_table_lut: u64,
}

impl Default for CostTable {
    fn default() -> Self {
        Self {
            exp_dsp: 7,
            rsqrt_dsp: 8,
            recip_dsp: 9,
            gelu_dsp: 26,
            requant_dsp: 1,
            exp_lut: 945,
            rsqrt_lut: 425,
            recip_lut: 196,
            gelu_lut: 1650,
            requant_lut: 0,
            exp_table_lut: 50,
            rsqrt_table_lut: 48,
            recip_table_lut: 72,
            gelu_table_lut: 43,
            requant_table_lut: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DspItem {
    pub stage: String,
    pub function: &'static str,
    /// Units per block.
    pub units: u64,
    pub dsp_per_unit: u64,
    /// `units * dsp_per_unit`.
    pub dsp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DspBreakdown {
    pub items: Vec<DspItem>,
    pub per_block: u64,
    pub blocks: u64,
    pub total: u64,
}

/// Counts arithmetic non-linear units.
///
/// * LayerNorm: one Rsqrt per token lane (`TP`).
/// * Softmax: one Exp and one Recip per token lane, per head.
/// * GeLU: one unit per lane (`TP * CIP`).
/// * ReQuant: one per token lane at every stage output except MatMul1,
///   whose requantization is fused with GeLU, plus one for the second
///   residual add that closes the block.
pub fn naive_dsp_estimate(pcfg: &ParallelismConfig, cost: &CostTable) -> Result<DspBreakdown> {
    let mut items = Vec::new();
    let mut push = |stage: &str, function: &'static str, units: u64, per: u64| {
        if units > 0 {
            items.push(DspItem {
                stage: stage.into(),
                function,
                units,
                dsp_per_unit: per,
                dsp: units * per,
            });
        }
    };
    let mut residual_lanes = 0;
    for s in &pcfg.stages {
        let (tp, inst) = (s.tp as u64, s.instances as u64);
        match s.kind {
            StageKind::LayerNorm => push(&s.name, "rsqrt", tp * inst, cost.rsqrt_dsp),
            StageKind::Softmax => {
                push(&s.name, "exp", tp * inst, cost.exp_dsp);
                push(&s.name, "recip", tp * inst, cost.recip_dsp);
            }
            StageKind::Gelu => push(&s.name, "gelu", s.parallelism() as u64 * inst, cost.gelu_dsp),
            _ => {}
        }
        let feeds_gelu = pcfg
            .stages
            .iter()
            .position(|o| o.name == s.name)
            .and_then(|i| pcfg.stages.get(i + 1))
            .is_some_and(|next| next.kind == StageKind::Gelu);
        if s.kind != StageKind::Gelu && !feeds_gelu {
            push(&s.name, "requant", tp, cost.requant_dsp);
        }
        if s.kind == StageKind::ResidualAdd {
            residual_lanes = tp;
        }
    }
    push("res_add2", "requant", residual_lanes, cost.requant_dsp);
    let per_block = items.iter().map(|i| i.dsp).sum();
    let blocks = pcfg.blocks as u64;
    Ok(DspBreakdown {
        items,
        per_block,
        blocks,
        total: per_block * blocks,
    })
}
