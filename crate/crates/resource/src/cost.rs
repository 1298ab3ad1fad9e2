//! Initiation interval, weight BRAM and buffer cost formulas.

use hgpipe_core::vit::TiledMatmulSpec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `TT * CIT * COT * passes`.
pub fn stage_ii(spec: &TiledMatmulSpec, passes: u64) -> u64 {
    spec.tt as u64 * spec.cit as u64 * spec.cot as u64 * passes
}

/// The slowest stage sets the accelerator II.
pub fn accelerator_ii(iis: &[u64]) -> Result<u64> {
    iis.iter().copied().max().ok_or_else(|| Error::invalid("no stage IIs"))
}

/// Geometry of one BRAM bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BramSpec {
    pub width: u64,
    pub depth: u64,
}

impl Default for BramSpec {
    fn default() -> Self {
        Self { width: 36, depth: 1024 }
    }
}

impl BramSpec {
    pub fn capacity(&self) -> u64 {
        self.width * self.depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BramUsage {
    pub count: u64,
    /// Weight bits over allocated bits.
    pub efficiency: f64,
}

/// Banks for a `DW * CIP * COP`-bit wide, `CIT * COT`-deep weight memory,
/// and the fraction of their bits holding weights.
pub fn bram_count_and_efficiency(dw: u64, cip: u64, cop: u64, cit: u64, cot: u64, bram: BramSpec) -> Result<BramUsage> {
    if [dw, cip, cop, cit, cot, bram.width, bram.depth].contains(&0) {
        return Err(Error::invalid("BRAM formula arguments must be positive"));
    }
    let count = (dw * cip * cop).div_ceil(bram.width) * (cit * cot).div_ceil(bram.depth);
    let bits = dw as u128 * (cip * cit) as u128 * (cop * cot) as u128;
    Ok(BramUsage {
        count,
        efficiency: bits as f64 / (count as u128 * bram.capacity() as u128) as f64,
    })
}

/// Banks holding one activation tensor of `elements` values, read
/// `lanes` values per cycle: the port width sets the number of banks side
/// by side and the remaining rows set how many are stacked.
pub fn tensor_brams(elements: u64, bits: u64, lanes: u64, bram: BramSpec) -> Result<u64> {
    if lanes == 0 || bits == 0 || bram.width == 0 || bram.depth == 0 {
        return Err(Error::invalid("tensor packing arguments must be positive"));
    }
    if elements == 0 {
        return Ok(0);
    }
    Ok((lanes * bits).div_ceil(bram.width) * elements.div_ceil(lanes).div_ceil(bram.depth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferKind {
    /// Double buffer holding two full tensors.
    Pipo,
    /// Queue of `depth` tiles of `tile_bits` each.
    Fifo { depth: u64, tile_bits: u64 },
    /// One full tensor, replayed.
    DeepBuffer,
}

/// Banks for one buffer. `tensor_brams` is the cost of one full tensor.
pub fn buffer_cost(tensor_brams: u64, kind: BufferKind, bram: BramSpec) -> u64 {
    match kind {
        BufferKind::Pipo => 2 * tensor_brams,
        BufferKind::DeepBuffer => tensor_brams,
        BufferKind::Fifo { depth, tile_bits } => (depth * tile_bits).div_ceil(bram.capacity()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BufferComparison {
    pub pipo_stages: u64,
    pub tensor_brams: u64,
    pub pipo: u64,
    pub hybrid: u64,
    /// `1 - hybrid / pipo`.
    pub reduction: f64,
}

/// Residual path held in `pipo_stages` ping-pong stages against a single
/// equivalent buffer in the hybrid design.
pub fn residual_buffer_comparison(tensor_brams: u64, pipo_stages: u64, bram: BramSpec) -> Result<BufferComparison> {
    if tensor_brams == 0 || pipo_stages == 0 {
        return Err(Error::invalid("buffer comparison needs a positive tensor cost and stage count"));
    }
    let pipo = pipo_stages * buffer_cost(tensor_brams, BufferKind::Pipo, bram);
    let hybrid = buffer_cost(tensor_brams, BufferKind::Pipo, bram);
    Ok(BufferComparison {
        pipo_stages,
        tensor_brams,
        pipo,
        hybrid,
        reduction: 1.0 - hybrid as f64 / pipo as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(t: usize, ci: usize, co: usize, tp: usize, cip: usize, cop: usize) -> TiledMatmulSpec {
        TiledMatmulSpec::new(t, ci, co, tp, cip, cop).unwrap()
    }

    #[test]
    fn ii_examples() {
        assert_eq!(stage_ii(&spec(196, 192, 64, 2, 6, 4), 1), 50176);
        assert_eq!(stage_ii(&spec(196, 196, 1, 2, 1, 1), 3), 57624);
        assert_eq!(stage_ii(&spec(196, 64, 196, 2, 4, 7), 1), 43904);
    }

    #[test]
    fn accelerator_ii_is_max() {
        assert_eq!(accelerator_ii(&[5]).unwrap(), 5);
        assert_eq!(accelerator_ii(&[7, 7, 7]).unwrap(), 7);
        assert_eq!(accelerator_ii(&[3, 9, 4]).unwrap(), 9);
        assert!(accelerator_ii(&[]).is_err());
    }

    #[test]
    fn bram_examples() {
        let b = BramSpec::default();
        let u = bram_count_and_efficiency(36, 1, 1, 1024, 1, b).unwrap();
        assert_eq!((u.count, u.efficiency), (1, 1.0));
        let u = bram_count_and_efficiency(4, 6, 4, 32, 16, b).unwrap();
        assert_eq!(u.count, 3);
        assert!((u.efficiency - 49152.0 / 110592.0).abs() < 1e-15);
        assert!(bram_count_and_efficiency(0, 1, 1, 1, 1, b).is_err());
    }

    #[test]
    fn buffer_examples() {
        let b = BramSpec::default();
        let c = residual_buffer_comparison(14, 6, b).unwrap();
        assert_eq!((c.pipo, c.hybrid), (168, 28));
        assert!((c.reduction - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(buffer_cost(14, BufferKind::Fifo { depth: 0, tile_bits: 64 }, b), 0);
        assert_eq!(buffer_cost(14, BufferKind::Fifo { depth: 512, tile_bits: 72 }, b), 1);
        assert_eq!(buffer_cost(14, BufferKind::DeepBuffer, b), 14);
    }

    #[test]
    fn tensor_packing() {
        let b = BramSpec::default();
        // 9 lanes of 4 bits fill one 36-bit row exactly
        assert_eq!(tensor_brams(9 * 1024, 4, 9, b).unwrap(), 1);
        assert_eq!(tensor_brams(9 * 1024 + 1, 4, 9, b).unwrap(), 2);
        assert_eq!(tensor_brams(0, 4, 9, b).unwrap(), 0);
        assert_eq!(tensor_brams(196 * 192, 4, 2, b).unwrap(), 19);
    }
}
