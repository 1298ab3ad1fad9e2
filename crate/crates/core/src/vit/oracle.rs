//! Direct loop implementations used as references for the tiled kernels.
//!
//! Accumulation is in `i64` with no tiling; results are narrowed to `i32`
//! only at the end so an overflow in the tiled kernel cannot hide here.

use super::config::ConvSpec;
use crate::{Error, Result};

fn narrow(v: i64) -> Result<i32> {
    i32::try_from(v).map_err(|_| Error::Overflow(v))
}

/// `x` is `T x CI`, `w` is `CO x CI`; returns `T x CO`.
pub fn naive_matmul(x: &[i32], w: &[i32], bias: Option<&[i32]>, t: usize, ci: usize, co: usize) -> Result<Vec<i32>> {
    if x.len() != t * ci || w.len() != co * ci || bias.is_some_and(|b| b.len() != co) {
        return Err(Error::ShapeMismatch("naive matmul operands".into()));
    }
    let mut y = Vec::with_capacity(t * co);
    for i in 0..t {
        for j in 0..co {
            let mut s = bias.map_or(0, |b| b[j] as i64);
            for k in 0..ci {
                s += x[i * ci + k] as i64 * w[j * ci + k] as i64;
            }
            y.push(narrow(s)?);
        }
    }
    Ok(y)
}

/// Direct strided valid convolution, `C_out x H_out x W_out`.
pub fn naive_conv(x: &[i32], w: &[i32], spec: &ConvSpec) -> Result<Vec<i32>> {
    let (c, h, wd, k, s) = (spec.in_channels, spec.height, spec.width, spec.kernel, spec.stride);
    if k == 0 || s == 0 || k > h || k > wd {
        return Err(Error::invalid("bad kernel/stride"));
    }
    if x.len() != c * h * wd || w.len() != spec.out_channels * c * k * k {
        return Err(Error::ShapeMismatch("naive conv operands".into()));
    }
    let (ho, wo) = ((h - k) / s + 1, (wd - k) / s + 1);
    let mut y = Vec::with_capacity(spec.out_channels * ho * wo);
    for oc in 0..spec.out_channels {
        for oh in 0..ho {
            for ow in 0..wo {
                let mut acc = 0i64;
                for ic in 0..c {
                    for kh in 0..k {
                        for kw in 0..k {
                            acc += x[(ic * h + oh * s + kh) * wd + ow * s + kw] as i64
                                * w[((oc * c + ic) * k + kh) * k + kw] as i64;
                        }
                    }
                }
                y.push(narrow(acc)?);
            }
        }
    }
    Ok(y)
}
