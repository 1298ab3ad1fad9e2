//! Lookup-table implementations of the non-linear operators.
//!
//! Every table addresses an integer input domain `[alpha, beta]` with a
//! power-of-two shift instead of a multiply: `index = (data - alpha) >> s`,
//! where `s = ceil(log2((beta - alpha) / (2^n - 1)))`. Inverted tables anchor
//! the index at `beta` instead (`index = (beta - data) >> s`), which keeps the
//! post-max-subtraction Exp input `0` exact.

mod builders;
mod calibrate;
mod dump;
mod segmented;
pub mod special;

pub use builders::{
    build_exp_table, build_recip_table, build_requant_table, build_rsqrt_table, fuse_gelu_requant,
};
pub use calibrate::{joint_range_calibration, Calibration, DEFAULT_MAX_ITERS};
pub use dump::{parse_segmented, parse_table};
pub use segmented::{build_segmented_recip, Segment, SegmentedLutTable, SegmentedValue};

use serde::{Deserialize, Serialize};

use crate::quant::{clamp_bits, qrange, round_half_even};
use crate::{Error, Result};

/// Exact reference index `round((data - alpha) * (2^n - 1) / (beta - alpha))`,
/// clamped to the table. This is the multiplier-based mapping the PoT index
/// approximates.
pub fn index_reference(data: f64, alpha: f64, beta: f64, addr_bits: u32) -> Result<u32> {
    if !(beta > alpha) {
        return Err(Error::invalid(format!("empty range [{alpha}, {beta}]")));
    }
    let top = ((1u64 << addr_bits) - 1) as f64;
    let idx = round_half_even((data - alpha) * top / (beta - alpha));
    Ok(idx.clamp(0.0, top) as u32)
}

/// PoT shift for an integer range: the smallest `s` with
/// `2^s * (2^n - 1) >= beta - alpha`.
pub fn pot_shift(alpha: i64, beta: i64, addr_bits: u32) -> Result<i32> {
    if beta <= alpha {
        return Err(Error::invalid(format!("empty range [{alpha}, {beta}]")));
    }
    if !(1..=20).contains(&addr_bits) {
        return Err(Error::invalid(format!("address width {addr_bits} out of range")));
    }
    let range = (beta as i128) - (alpha as i128);
    let top = (1i128 << addr_bits) - 1;
    let mut s = 0i32;
    if range <= top {
        while range << (1 - s) <= top {
            s -= 1;
        }
    } else {
        while top << s < range {
            s += 1;
        }
    }
    Ok(s)
}

/// `(data - alpha) >> shift`, or a left shift when `shift < 0`.
pub fn index_pot(data: i64, alpha: i64, shift: i32) -> i64 {
    shift_index(data - alpha, shift)
}

/// `(beta - data) >> shift`: `data == beta` lands on index 0.
pub fn index_pot_inverted(data: i64, beta: i64, shift: i32) -> i64 {
    shift_index(beta - data, shift)
}

fn shift_index(d: i64, shift: i32) -> i64 {
    if shift >= 0 {
        d >> shift.min(63)
    } else {
        d << (-shift).min(62)
    }
}

/// Input domain and addressing of a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDomain {
    pub alpha: i64,
    pub beta: i64,
    pub addr_bits: u32,
    pub inverted: bool,
}

impl TableDomain {
    pub fn new(alpha: i64, beta: i64, addr_bits: u32) -> Self {
        Self {
            alpha,
            beta,
            addr_bits,
            inverted: false,
        }
    }

    pub fn inverted(alpha: i64, beta: i64, addr_bits: u32) -> Self {
        Self {
            inverted: true,
            ..Self::new(alpha, beta, addr_bits)
        }
    }
}

/// How table outputs are mapped onto the integer output grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutScale {
    Fixed(f64),
    /// Largest sampled magnitude maps to `Q_max`.
    FitMax,
}

/// A sampled non-linear function over an integer input domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutTable {
    pub(crate) entries: Vec<i32>,
    pub(crate) addr_bits: u32,
    pub(crate) alpha: i64,
    pub(crate) beta: i64,
    pub(crate) shift: i32,
    pub(crate) inverted: bool,
    pub(crate) out_bits: u32,
    pub(crate) out_scale: f64,
}

impl LutTable {
    /// Samples `f` once per table entry and quantizes the samples.
    ///
    /// Regular tables sample the centre of the integer inputs sharing an
    /// entry. Inverted tables sample the anchor edge (`beta - i * 2^s`) so
    /// that entry 0 holds `f(beta)` exactly.
    pub fn build(f: impl Fn(f64) -> f64, domain: TableDomain, out_bits: u32, out_scale: OutScale) -> Result<Self> {
        let shift = pot_shift(domain.alpha, domain.beta, domain.addr_bits)?;
        if !(2..=24).contains(&out_bits) {
            return Err(Error::invalid(format!("output width {out_bits} out of range")));
        }
        let depth = 1usize << domain.addr_bits;
        let mut samples = Vec::with_capacity(depth);
        for i in 0..depth {
            let x = representative(domain.alpha, domain.beta, shift, domain.inverted, i);
            let y = f(x);
            if !y.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            samples.push(y);
        }
        let (_, qmax) = qrange(out_bits);
        let out_scale = match out_scale {
            OutScale::Fixed(s) => s,
            OutScale::FitMax => {
                let m = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if m > 0.0 {
                    m / qmax as f64
                } else {
                    1.0
                }
            }
        };
        if !(out_scale.is_finite() && out_scale > 0.0) {
            return Err(Error::invalid(format!("output scale {out_scale} must be positive")));
        }
        let entries = samples
            .iter()
            .map(|y| {
                let q = round_half_even(y / out_scale);
                clamp_bits(q.clamp(i64::MIN as f64, i64::MAX as f64) as i64, out_bits)
            })
            .collect();
        Ok(Self {
            entries,
            addr_bits: domain.addr_bits,
            alpha: domain.alpha,
            beta: domain.beta,
            shift,
            inverted: domain.inverted,
            out_bits,
            out_scale,
        })
    }

    /// Table whose every entry is `value`; used when a calibration range
    /// collapses to a single point.
    pub fn constant(at: i64, addr_bits: u32, out_bits: u32, out_scale: f64, value: i32) -> Self {
        Self {
            entries: vec![clamp_bits(value as i64, out_bits); 1 << addr_bits],
            addr_bits,
            alpha: at,
            beta: at,
            shift: 0,
            inverted: false,
            out_bits,
            out_scale,
        }
    }

    /// Assembles a table from raw parts, checking every invariant.
    pub fn from_parts(
        entries: Vec<i32>,
        domain: TableDomain,
        shift: i32,
        out_bits: u32,
        out_scale: f64,
    ) -> Result<Self> {
        if !(1..=20).contains(&domain.addr_bits) {
            return Err(Error::invalid(format!("address width {} out of range", domain.addr_bits)));
        }
        if entries.len() != 1usize << domain.addr_bits {
            return Err(Error::invalid(format!(
                "{} entries for a {}-bit address",
                entries.len(),
                domain.addr_bits
            )));
        }
        if !(2..=24).contains(&out_bits) {
            return Err(Error::invalid(format!("output width {out_bits} out of range")));
        }
        let (lo, hi) = qrange(out_bits);
        if entries.iter().any(|e| !(lo..=hi).contains(e)) {
            return Err(Error::invalid("entry outside the output range"));
        }
        if !(out_scale.is_finite() && out_scale > 0.0) {
            return Err(Error::invalid(format!("output scale {out_scale} must be positive")));
        }
        if domain.beta < domain.alpha {
            return Err(Error::invalid("beta < alpha"));
        }
        let expected = if domain.beta == domain.alpha {
            0
        } else {
            pot_shift(domain.alpha, domain.beta, domain.addr_bits)?
        };
        if shift != expected {
            return Err(Error::invalid(format!(
                "shift {shift} inconsistent with range (expected {expected})"
            )));
        }
        Ok(Self {
            entries,
            addr_bits: domain.addr_bits,
            alpha: domain.alpha,
            beta: domain.beta,
            shift,
            inverted: domain.inverted,
            out_bits,
            out_scale,
        })
    }

    pub fn entries(&self) -> &[i32] {
        &self.entries
    }

    pub fn addr_bits(&self) -> u32 {
        self.addr_bits
    }

    pub fn depth(&self) -> usize {
        self.entries.len()
    }

    pub fn alpha(&self) -> i64 {
        self.alpha
    }

    pub fn beta(&self) -> i64 {
        self.beta
    }

    pub fn shift(&self) -> i32 {
        self.shift
    }

    pub fn inverted(&self) -> bool {
        self.inverted
    }

    pub fn out_bits(&self) -> u32 {
        self.out_bits
    }

    pub fn out_scale(&self) -> f64 {
        self.out_scale
    }

    pub fn domain(&self) -> TableDomain {
        TableDomain {
            alpha: self.alpha,
            beta: self.beta,
            addr_bits: self.addr_bits,
            inverted: self.inverted,
        }
    }

    /// Table index for `data` after clamping it into `[alpha, beta]`.
    pub fn index(&self, data: i64) -> usize {
        let d = data.clamp(self.alpha, self.beta);
        let raw = if self.inverted {
            index_pot_inverted(d, self.beta, self.shift)
        } else {
            index_pot(d, self.alpha, self.shift)
        };
        raw.clamp(0, self.entries.len() as i64 - 1) as usize
    }

    pub fn lookup(&self, data: i64) -> i32 {
        self.entries[self.index(data)]
    }

    /// Dequantized lookup.
    pub fn eval(&self, data: i64) -> f64 {
        self.lookup(data) as f64 * self.out_scale
    }

    /// Input value that entry `i` was sampled at.
    pub fn representative(&self, i: usize) -> f64 {
        representative(self.alpha, self.beta, self.shift, self.inverted, i)
    }

    /// Indices a clamped input can actually reach, in input order.
    pub fn reachable_indices(&self) -> Vec<usize> {
        if self.alpha == self.beta {
            return vec![0];
        }
        if self.shift >= 0 {
            let last = self.index(if self.inverted { self.alpha } else { self.beta });
            (0..=last).collect()
        } else {
            let step = 1usize << (-self.shift);
            let span = (self.beta - self.alpha) as usize;
            (0..=span).map(|j| j * step).collect()
        }
    }

    /// Largest input value that still maps to index `i` or below
    /// (non-inverted tables).
    fn last_input_of(&self, i: usize) -> i64 {
        if self.shift >= 0 {
            self.alpha + (((i as i64) + 1) << self.shift) - 1
        } else {
            self.alpha + ((i as i64) >> (-self.shift))
        }
    }

    /// Smallest input value mapping to index `i` or above.
    fn first_input_of(&self, i: usize) -> i64 {
        if self.shift >= 0 {
            self.alpha + ((i as i64) << self.shift)
        } else {
            let k = -self.shift;
            self.alpha + (((i as i64) + (1 << k) - 1) >> k)
        }
    }

    /// Plateau analysis over the reachable entries: `(lsi, msi)` where
    /// `lsi` is the last index of the left clamp plateau and `msi` the first
    /// index of the right one. A plateau is a run of entries equal to the
    /// entry at that end of the reachable range.
    pub fn significant_indices(&self) -> (usize, usize) {
        let idx = self.reachable_indices();
        let first = self.entries[idx[0]];
        let last = self.entries[*idx.last().unwrap()];
        let left = idx.iter().take_while(|&&i| self.entries[i] == first).count();
        if left == idx.len() {
            return (*idx.last().unwrap(), *idx.last().unwrap());
        }
        let right = idx.iter().rev().take_while(|&&i| self.entries[i] == last).count();
        (idx[left - 1], idx[idx.len() - right])
    }

    /// Entries inside the reachable range that merely repeat a clamp value
    /// at either end.
    pub fn repeated_entries(&self) -> usize {
        let idx = self.reachable_indices();
        let first = self.entries[idx[0]];
        let last = self.entries[*idx.last().unwrap()];
        let left = idx.iter().take_while(|&&i| self.entries[i] == first).count();
        if left == idx.len() {
            return idx.len() - 1;
        }
        let right = idx.iter().rev().take_while(|&&i| self.entries[i] == last).count();
        (left - 1) + (right - 1)
    }

    /// Entries past the last reachable index; PoT rounding leaves these
    /// unused on the right of the table.
    pub fn unused_tail(&self) -> usize {
        let idx = self.reachable_indices();
        self.entries.len() - 1 - idx.last().copied().unwrap_or(0)
    }

    /// Max absolute and mean squared error of the dequantized lookup against
    /// `f` over `inputs`.
    pub fn error_against(&self, f: impl Fn(f64) -> f64, inputs: impl IntoIterator<Item = i64>) -> ErrorStats {
        let mut stats = ErrorStats::default();
        for d in inputs {
            let e = self.eval(d) - f(d as f64);
            stats.push(e);
        }
        stats
    }

    /// All integers of the domain, strided so that at most `limit` are visited.
    pub fn domain_inputs(&self, limit: usize) -> impl Iterator<Item = i64> {
        let span = (self.beta - self.alpha) as u64 + 1;
        let step = span.div_ceil(limit.max(1) as u64).max(1) as i64;
        let (alpha, beta) = (self.alpha, self.beta);
        (0..).map(move |k| alpha + k * step).take_while(move |&d| d <= beta)
    }

    pub fn dump(&self) -> String {
        dump::dump_table(self)
    }

    // used by calibration
    pub(crate) fn input_span_of(&self, lsi: usize, msi: usize) -> (i64, i64) {
        (self.first_input_of(lsi), self.last_input_of(msi).min(self.beta))
    }
}

fn representative(alpha: i64, beta: i64, shift: i32, inverted: bool, i: usize) -> f64 {
    let step = (shift as f64).exp2();
    if inverted {
        beta as f64 - i as f64 * step
    } else if shift >= 0 {
        alpha as f64 + i as f64 * step + (step - 1.0) / 2.0
    } else {
        alpha as f64 + i as f64 * step
    }
}

/// Running error statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub max_abs: f64,
    pub sum_sq: f64,
}

impl ErrorStats {
    pub fn push(&mut self, e: f64) {
        self.count += 1;
        self.max_abs = self.max_abs.max(e.abs());
        self.sum_sq += e * e;
    }

    pub fn mse(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum_sq / self.count as f64
        }
    }
}
