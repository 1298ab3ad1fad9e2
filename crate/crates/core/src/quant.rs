//! Integer tensors, requantization and re-parameterization of float
//! training parameters into integer pipeline constants.
//!
//! All rounding in this module is round-half-to-even.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Width of the [`FixedPointScale`] mantissa, sign included.
pub const MANTISSA_BITS: u32 = 16;

const MANTISSA_MAX: i32 = (1 << (MANTISSA_BITS - 1)) - 1;
const MANTISSA_MIN: i32 = -(1 << (MANTISSA_BITS - 1));
const MAX_SHIFT: u32 = 62;

/// Signed symmetric range `[Q_min, Q_max]` of a `bits`-wide integer.
pub fn qrange(bits: u32) -> (i32, i32) {
    assert!((1..=31).contains(&bits), "bit width {bits} out of range");
    let half = 1i64 << (bits - 1);
    ((-half) as i32, (half - 1) as i32)
}

pub fn clamp_bits(v: i64, bits: u32) -> i32 {
    let (lo, hi) = qrange(bits);
    v.clamp(lo as i64, hi as i64) as i32
}

pub fn round_half_even(x: f64) -> f64 {
    x.round_ties_even()
}

/// Rounds `num / 2^shift` to the nearest integer, ties to even, exactly.
pub fn shift_round_half_even(num: i128, shift: u32) -> i128 {
    if shift == 0 {
        return num;
    }
    let floor = num >> shift;
    let rem = num - (floor << shift);
    let half = 1i128 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

/// Real scaling factor represented as `mantissa * 2^-shift`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointScale {
    mantissa: i32,
    shift: u32,
}

impl FixedPointScale {
    pub fn new(mantissa: i32, shift: u32) -> Result<Self> {
        if !(MANTISSA_MIN..=MANTISSA_MAX).contains(&mantissa) {
            return Err(Error::invalid(format!(
                "mantissa {mantissa} does not fit {MANTISSA_BITS} bits"
            )));
        }
        if shift > MAX_SHIFT {
            return Err(Error::invalid(format!("shift {shift} exceeds {MAX_SHIFT}")));
        }
        Ok(Self { mantissa, shift })
    }

    /// Closest representable scale using the largest shift whose rounded
    /// mantissa still fits the mantissa width.
    pub fn from_f64(scale: f64) -> Result<Self> {
        if !scale.is_finite() || scale == 0.0 {
            return Err(Error::invalid(format!(
                "scale {scale} is not representable"
            )));
        }
        let mag = scale.abs();
        if round_half_even(mag) > MANTISSA_MAX as f64 {
            return Err(Error::invalid(format!(
                "scale {scale} exceeds the mantissa range"
            )));
        }
        // 2^e <= mag < 2^(e+1); the mantissa gets MANTISSA_BITS - 1 magnitude bits.
        let exp = mag.log2().floor() as i64;
        let mut shift = (MANTISSA_BITS as i64 - 2 - exp).clamp(0, MAX_SHIFT as i64) as u32;
        loop {
            let m = round_half_even(mag * (shift as f64).exp2());
            if m <= MANTISSA_MAX as f64 || shift == 0 {
                break;
            }
            shift -= 1;
        }
        while shift < MAX_SHIFT && round_half_even(mag * ((shift + 1) as f64).exp2()) <= MANTISSA_MAX as f64 {
            shift += 1;
        }
        let m = round_half_even(mag * (shift as f64).exp2()) as i32;
        if m == 0 {
            return Err(Error::invalid(format!("scale {scale} underflows")));
        }
        Self::new(if scale < 0.0 { -m } else { m }, shift)
    }

    pub fn mantissa(&self) -> i32 {
        self.mantissa
    }

    pub fn shift(&self) -> u32 {
        self.shift
    }

    pub fn value(&self) -> f64 {
        self.mantissa as f64 * (-(self.shift as f64)).exp2()
    }

    /// `round_half_even(x * mantissa / 2^shift)` in exact integer arithmetic.
    pub fn apply(&self, x: i64) -> i64 {
        shift_round_half_even(x as i128 * self.mantissa as i128, self.shift) as i64
    }
}

/// `clamp(round((x - zero_point) * scale), Q_min, Q_max)`.
pub fn requant(x: i64, zero_point: i64, scale: FixedPointScale, bits: u32) -> i32 {
    clamp_bits(scale.apply(x - zero_point), bits)
}

/// Dense integer tensor with a per-tensor scale and zero point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantTensor {
    data: Vec<i32>,
    shape: Vec<usize>,
    bits: u32,
    scale: f64,
    zero_point: i32,
}

impl QuantTensor {
    pub fn new(data: Vec<i32>, shape: Vec<usize>, bits: u32, scale: f64, zero_point: i32) -> Result<Self> {
        if !(2..=16).contains(&bits) {
            return Err(Error::invalid(format!("unsupported bit width {bits}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {len} elements, got {}",
                data.len()
            )));
        }
        let (lo, hi) = qrange(bits);
        if let Some(v) = data.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(Error::invalid(format!(
                "value {v} outside [{lo}, {hi}] for {bits} bits"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("scale {scale} must be positive")));
        }
        Ok(Self {
            data,
            shape,
            bits,
            scale,
            zero_point,
        })
    }

    /// Round-to-nearest quantization of real values onto the `bits` grid.
    pub fn quantize(values: &[f64], shape: Vec<usize>, bits: u32, scale: f64) -> Result<Self> {
        let data = values
            .iter()
            .map(|v| clamp_bits(round_half_even(v / scale) as i64, bits))
            .collect();
        Self::new(data, shape, bits, scale, 0)
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<i32> {
        self.data
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn zero_point(&self) -> i32 {
        self.zero_point
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|&v| (v - self.zero_point) as f64 * self.scale)
            .collect()
    }
}

/// Scale for symmetric per-tensor quantization of values bounded by `max_abs`.
pub fn symmetric_scale(max_abs: f64, bits: u32) -> f64 {
    let (_, hi) = qrange(bits);
    if max_abs > 0.0 && max_abs.is_finite() {
        max_abs / hi as f64
    } else {
        1.0 / hi as f64
    }
}

/// Batch-norm statistics and affine parameters of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: f64,
    pub beta: f64,
    pub mean: f64,
    pub var: f64,
    pub eps: f64,
}

/// Per-branch factor `gamma * s_x * s_w / sqrt(var + eps)` feeding the
/// residual rescale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchScale {
    pub gamma: f64,
    pub s_x: f64,
    pub s_w: f64,
    pub var: f64,
    pub eps: f64,
}

/// Integer constants of one fused layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedLayerParams {
    pub weights: QuantTensor,
    pub bias: Vec<i32>,
    pub residual_rescale: Option<f64>,
    pub output_scale: f64,
}

impl FusedLayerParams {
    pub fn new(weights: QuantTensor, bias: Vec<i32>, residual_rescale: Option<f64>, output_scale: f64) -> Result<Self> {
        let co = weights.shape().first().copied().unwrap_or(0);
        if bias.len() != co {
            return Err(Error::ShapeMismatch(format!(
                "bias has {} entries for {co} output channels",
                bias.len()
            )));
        }
        if let Some(r) = residual_rescale {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(format!("residual rescale {r} must be positive")));
            }
        }
        if !(output_scale.is_finite() && output_scale > 0.0) {
            return Err(Error::invalid(format!(
                "output scale {output_scale} must be positive"
            )));
        }
        Ok(Self {
            weights,
            bias,
            residual_rescale,
            output_scale,
        })
    }
}

/// Integer bias `round((beta*sqrt(var+eps) - mean*gamma) / (gamma*s_x*s_w))`
/// added after the MAC array.
pub fn fuse_bn_bias(bn: &BatchNorm, s_x: f64, s_w: f64) -> Result<i64> {
    let denom = Dd::from_prod(bn.gamma, s_x).mul_f64(s_w);
    if denom.hi == 0.0 {
        return Err(Error::DivisionByZero("fuse_bn_bias"));
    }
    let var = Dd::from_sum(bn.var, bn.eps);
    if var.hi <= 0.0 {
        return Err(Error::invalid("var + eps must be positive"));
    }
    let num = var.sqrt().mul_f64(bn.beta).sub(Dd::from_prod(bn.mean, bn.gamma));
    let q = num.div(denom);
    if !q.hi.is_finite() || q.hi.abs() > i64::MAX as f64 / 2.0 {
        return Err(Error::invalid(format!("fused bias {} is out of range", q.hi)));
    }
    Ok(q.round_half_even())
}

fn branch_factor(p: &BranchScale) -> Result<Dd> {
    let var = Dd::from_sum(p.var, p.eps);
    if var.hi <= 0.0 {
        return Err(Error::invalid("var + eps must be positive"));
    }
    Ok(Dd::from_prod(p.gamma, p.s_x).mul_f64(p.s_w).div(var.sqrt()))
}

/// Ratio of the residual-branch factor to the main-branch factor; the
/// residual integers are multiplied by it before the addition.
pub fn residual_rescale_factor(main: &BranchScale, residual: &BranchScale) -> Result<f64> {
    let m = branch_factor(main)?;
    if m.hi == 0.0 {
        return Err(Error::DivisionByZero("residual_rescale_factor"));
    }
    Ok(branch_factor(residual)?.div(m).to_f64())
}

/// Output requantization scale `gamma*s_x*s_w / (s_y*sqrt(var+eps))`.
pub fn output_requant_scale(gamma: f64, var: f64, eps: f64, s_x: f64, s_w: f64, s_y: f64) -> Result<f64> {
    if !(s_y > 0.0) {
        return Err(Error::invalid(format!("s_y = {s_y} must be positive")));
    }
    let v = Dd::from_sum(var, eps);
    if v.hi <= 0.0 {
        return Err(Error::invalid("var + eps must be positive"));
    }
    let num = Dd::from_prod(gamma, s_x).mul_f64(s_w);
    let den = v.sqrt().mul_f64(s_y);
    Ok(num.div(den).to_f64())
}

/// Smallest integer `e` with `2^e >= x`.
pub fn pot_round_up(x: f64) -> Result<i32> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid(format!("pot_round_up needs x > 0, got {x}")));
    }
    let mut e = x.log2().ceil() as i32;
    while (e as f64 - 1.0).exp2() >= x {
        e -= 1;
    }
    while (e as f64).exp2() < x {
        e += 1;
    }
    Ok(e)
}

/// Double-double value `hi + lo`, enough to keep the fused constants within
/// half an ulp of the exact real result.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        Dd { hi: s, lo: err }
    }

    fn norm(hi: f64, lo: f64) -> Dd {
        Self::two_sum(hi, lo)
    }

    fn from_sum(a: f64, b: f64) -> Dd {
        Self::two_sum(a, b)
    }

    fn from_prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Self::two_sum(self.hi, o.hi);
        Self::norm(s.hi, s.lo + self.lo + o.lo)
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(Dd { hi: -o.hi, lo: -o.lo })
    }

    fn mul_f64(self, b: f64) -> Dd {
        let p = Self::from_prod(self.hi, b);
        Self::norm(p.hi, p.lo + self.lo * b)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f64(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f64(q2));
        let q3 = r.hi / o.hi;
        Self::norm(q1, q2).add(Dd { hi: q3, lo: 0.0 })
    }

    fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd { hi: 0.0, lo: 0.0 };
        }
        let s = self.hi.sqrt();
        let r = self.sub(Self::from_prod(s, s));
        Self::norm(s, r.hi / (2.0 * s))
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn round_half_even(self) -> i64 {
        let r = self.hi.round_ties_even();
        let diff = Dd::two_sum(self.hi, -r).add(Dd { hi: self.lo, lo: 0.0 }).to_f64();
        let base = r as i64;
        if diff > 0.5 {
            base + 1
        } else if diff < -0.5 {
            base - 1
        } else if diff == 0.5 {
            if base & 1 == 0 { base } else { base + 1 }
        } else if diff == -0.5 {
            if base & 1 == 0 { base } else { base - 1 }
        } else {
            base
        }
    }
}
