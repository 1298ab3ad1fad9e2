use serde::{Deserialize, Serialize};

use super::{build_recip_table, LutTable};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentedValue {
    pub value: i32,
    pub segment: Segment,
    pub scale: f64,
}

impl SegmentedValue {
    pub fn real(&self) -> f64 {
        self.value as f64 * self.scale
    }
}

/// Two tables with independent output scales split at `pivot`. Inputs
/// `<= pivot` use the low segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedLutTable {
    pub(crate) low: LutTable,
    pub(crate) high: LutTable,
    pub(crate) pivot: i64,
}

impl SegmentedLutTable {
    pub fn new(low: LutTable, high: LutTable, pivot: i64) -> Result<Self> {
        if low.beta() != pivot || high.alpha() != pivot + 1 {
            return Err(Error::invalid(format!(
                "segments [{}, {}] and [{}, {}] do not meet at pivot {pivot}",
                low.alpha(),
                low.beta(),
                high.alpha(),
                high.beta()
            )));
        }
        if low.out_bits() != high.out_bits() || low.addr_bits() != high.addr_bits() {
            return Err(Error::invalid("segments must share address and output widths"));
        }
        Ok(Self { low, high, pivot })
    }

    pub fn low(&self) -> &LutTable {
        &self.low
    }

    pub fn high(&self) -> &LutTable {
        &self.high
    }

    pub fn pivot(&self) -> i64 {
        self.pivot
    }

    pub fn alpha(&self) -> i64 {
        self.low.alpha()
    }

    pub fn beta(&self) -> i64 {
        self.high.beta()
    }

    pub fn total_entries(&self) -> usize {
        self.low.depth() + self.high.depth()
    }

    pub fn segment(&self, which: Segment) -> &LutTable {
        match which {
            Segment::Low => &self.low,
            Segment::High => &self.high,
        }
    }

    pub fn lookup(&self, x: i64) -> SegmentedValue {
        let segment = if x <= self.pivot { Segment::Low } else { Segment::High };
        let t = self.segment(segment);
        SegmentedValue {
            value: t.lookup(x),
            segment,
            scale: t.out_scale(),
        }
    }

    pub fn eval(&self, x: i64) -> f64 {
        self.lookup(x).real()
    }

    pub fn dump(&self) -> String {
        super::dump::dump_segmented(self)
    }
}

/// Segmented `1 / (x * in_scale)` over `[1, beta]`, pivot at `beta / 8`.
pub fn build_segmented_recip(beta: i64, addr_bits: u32, out_bits: u32, in_scale: f64) -> Result<SegmentedLutTable> {
    if beta < 16 {
        return Err(Error::invalid(format!("segmented recip needs beta >= 16, got {beta}")));
    }
    let pivot = beta / 8;
    let low = build_recip_table(1, pivot, addr_bits, out_bits, in_scale)?;
    let high = build_recip_table(pivot + 1, beta, addr_bits, out_bits, in_scale)?;
    SegmentedLutTable::new(low, high, pivot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pivot_routing() {
        let t = build_segmented_recip(24_892, 6, 8, 1.0 / 127.0).unwrap();
        assert_eq!(t.pivot(), 3111);
        assert_eq!(t.total_entries(), 128);
        assert_eq!(t.lookup(3111).segment, Segment::Low);
        assert_eq!(t.lookup(3112).segment, Segment::High);
        assert_eq!(t.lookup(1).segment, Segment::Low);
    }

    #[test]
    fn right_boundary_within_one_step() {
        let beta = 24_892;
        let t = build_segmented_recip(beta, 6, 8, 1.0).unwrap();
        let err = (t.eval(beta) - 1.0 / beta as f64).abs();
        assert!(err <= t.high().out_scale(), "err {err}");
    }

    #[test]
    fn pivot_value_comes_from_low_segment() {
        let t = build_segmented_recip(1000, 6, 8, 1.0).unwrap();
        let v = t.lookup(t.pivot());
        assert_eq!(v.value, t.low().lookup(t.pivot()));
        assert_eq!(v.scale, t.low().out_scale());
    }

    #[test]
    fn rejects_tiny_range() {
        assert!(build_segmented_recip(0, 6, 8, 1.0).is_err());
        assert!(build_segmented_recip(-5, 6, 8, 1.0).is_err());
    }
}
