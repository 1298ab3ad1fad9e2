//! Table builders for the operators of the integer pipeline.

use super::special::gelu;
use super::{LutTable, OutScale, TableDomain};
use crate::quant::qrange;
use crate::{Error, Result};

/// Inverted Exp table over `[alpha, 0]`. Inputs are max-subtracted scores
/// in units of `in_scale`; entry 0 is `exp(0)` and maps to `Q_max`.
pub fn build_exp_table(alpha: i64, addr_bits: u32, out_bits: u32, in_scale: f64) -> Result<LutTable> {
    if alpha >= 0 {
        return Err(Error::invalid(format!("exp table needs alpha < 0, got {alpha}")));
    }
    let (_, qmax) = qrange(out_bits);
    LutTable::build(
        |d| (d * in_scale).exp(),
        TableDomain::inverted(alpha, 0, addr_bits),
        out_bits,
        OutScale::Fixed(1.0 / qmax as f64),
    )
}

/// One table computing `ReQuant(GeLU(x))` directly from the accumulator:
/// `clamp(round(gelu(d * in_scale) / out_scale))`.
pub fn fuse_gelu_requant(
    in_scale: f64,
    out_scale: f64,
    out_bits: u32,
    alpha: i64,
    beta: i64,
    addr_bits: u32,
) -> Result<LutTable> {
    if !(in_scale > 0.0 && out_scale > 0.0) {
        return Err(Error::invalid("gelu table scales must be positive"));
    }
    LutTable::build(
        |d| gelu(d * in_scale),
        TableDomain::new(alpha, beta, addr_bits),
        out_bits,
        OutScale::Fixed(out_scale),
    )
}

/// `1 / sqrt(v * in_scale + eps)` over a non-negative variance domain.
pub fn build_rsqrt_table(
    alpha: i64,
    beta: i64,
    addr_bits: u32,
    out_bits: u32,
    in_scale: f64,
    eps: f64,
) -> Result<LutTable> {
    if alpha < 0 {
        return Err(Error::invalid("rsqrt domain must be non-negative"));
    }
    if !(eps > 0.0 || alpha > 0) {
        return Err(Error::invalid("rsqrt needs eps > 0 when the domain includes 0"));
    }
    LutTable::build(
        |v| 1.0 / (v * in_scale + eps).sqrt(),
        TableDomain::new(alpha, beta, addr_bits),
        out_bits,
        OutScale::FitMax,
    )
}

/// ReQuant as a table: `clamp(round(d * scale), Q_min, Q_max)`.
pub fn build_requant_table(alpha: i64, beta: i64, addr_bits: u32, out_bits: u32, scale: f64) -> Result<LutTable> {
    LutTable::build(
        |d| d * scale,
        TableDomain::new(alpha, beta, addr_bits),
        out_bits,
        OutScale::Fixed(1.0),
    )
}

/// Single-segment `1 / (x * in_scale)` table over `[alpha, beta]`, `alpha >= 1`.
pub fn build_recip_table(alpha: i64, beta: i64, addr_bits: u32, out_bits: u32, in_scale: f64) -> Result<LutTable> {
    if alpha < 1 {
        return Err(Error::invalid("recip domain must start at 1 or above"));
    }
    LutTable::build(
        |x| 1.0 / (x * in_scale),
        TableDomain::new(alpha, beta, addr_bits),
        out_bits,
        OutScale::FitMax,
    )
}
