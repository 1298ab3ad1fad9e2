//! Output-stationary tiled matmul and the patch-embedding convolution.
//!
//! Both kernels keep 32-bit partial sums and fail with [`Error::Overflow`]
//! rather than wrap.

use super::config::{ConvSpec, TiledMatmulSpec};
use crate::{Error, Result};

#[inline]
fn acc32(v: i64) -> Result<i64> {
    if v > i32::MAX as i64 || v < i32::MIN as i64 {
        Err(Error::Overflow(v))
    } else {
        Ok(v)
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::ShapeMismatch(format!("{what}: expected {want} elements, got {got}")));
    }
    Ok(())
}

/// `y[t][co] = post(t, co, bias[co] + sum_ci x[t][ci] * w[co][ci])`.
///
/// `x` is `T x CI` and `w` is `CO x CI`, both row-major. The schedule walks
/// token tiles, then output-channel tiles, then input-channel tiles; the
/// `TP x COP` partial sums of one output tile stay resident across the CI
/// loop and go through `post` once it finishes.
pub fn tiled_matmul_os(
    x: &[i32],
    w: &[i32],
    bias: Option<&[i32]>,
    spec: &TiledMatmulSpec,
    mut post: impl FnMut(usize, usize, i32) -> i32,
) -> Result<Vec<i32>> {
    let (t, ci, co) = (spec.t(), spec.ci(), spec.co());
    check_len("matmul input", x.len(), t * ci)?;
    check_len("matmul weights", w.len(), co * ci)?;
    if let Some(b) = bias {
        check_len("matmul bias", b.len(), co)?;
    }
    let mut y = vec![0i32; t * co];
    let mut psum = vec![0i64; spec.tp * spec.cop];
    for tt in 0..spec.tt {
        for cot in 0..spec.cot {
            for tp in 0..spec.tp {
                for cop in 0..spec.cop {
                    psum[tp * spec.cop + cop] = bias.map_or(0, |b| b[cot * spec.cop + cop] as i64);
                }
            }
            for cit in 0..spec.cit {
                for tp in 0..spec.tp {
                    let xrow = &x[(tt * spec.tp + tp) * ci + cit * spec.cip..][..spec.cip];
                    for cop in 0..spec.cop {
                        let wrow = &w[(cot * spec.cop + cop) * ci + cit * spec.cip..][..spec.cip];
                        let mut s = psum[tp * spec.cop + cop];
                        for cip in 0..spec.cip {
                            s = acc32(s + xrow[cip] as i64 * wrow[cip] as i64)?;
                        }
                        psum[tp * spec.cop + cop] = s;
                    }
                }
            }
            for tp in 0..spec.tp {
                for cop in 0..spec.cop {
                    let (row, col) = (tt * spec.tp + tp, cot * spec.cop + cop);
                    y[row * co + col] = post(row, col, psum[tp * spec.cop + cop] as i32);
                }
            }
        }
    }
    Ok(y)
}

/// Strided valid convolution in the tile/unroll order of the patch-embed
/// engine.
///
/// `x` is `C_in x H x W`, `w` is `C_out x C_in x K x K`, the result is
/// `C_out x H_out x W_out`. Tile loops run over output row/column tiles,
/// output-channel tiles and input-channel tiles; inside a tile the
/// `hop x wop x cop` outputs, `cip` input channels and the `K x K` window are
/// unrolled. The partial sums start at 0 on the first input-channel tile and
/// are flushed after the last one.
pub fn conv_step3macs(x: &[i32], w: &[i32], spec: &ConvSpec) -> Result<Vec<i32>> {
    spec.validate()?;
    let (h, wd, k, s) = (spec.height, spec.width, spec.kernel, spec.stride);
    let (ho, wo) = (spec.out_height(), spec.out_width());
    check_len("conv input", x.len(), spec.in_channels * h * wd)?;
    check_len("conv weights", w.len(), spec.out_channels * spec.in_channels * k * k)?;
    let (hit_n, wit_n) = (ho / spec.hop, wo / spec.wop);
    let (cot_n, cit_n) = (spec.out_channels / spec.cop, spec.in_channels / spec.cip);
    let mut out = vec![0i32; spec.out_channels * ho * wo];
    let mut psum = vec![0i64; spec.hop * spec.wop * spec.cop];
    for hit in 0..hit_n {
        for wit in 0..wit_n {
            for cot in 0..cot_n {
                for cit in 0..cit_n {
                    if cit == 0 {
                        psum.fill(0);
                    }
                    for hop in 0..spec.hop {
                        for wop in 0..spec.wop {
                            for cop in 0..spec.cop {
                                let oc = cot * spec.cop + cop;
                                let slot = (hop * spec.wop + wop) * spec.cop + cop;
                                let mut acc = psum[slot];
                                for cip in 0..spec.cip {
                                    let ic = cit * spec.cip + cip;
                                    for kh in 0..k {
                                        let hip = (hit * spec.hop + hop) * s + kh;
                                        for kw in 0..k {
                                            let wip = (wit * spec.wop + wop) * s + kw;
                                            let xv = x[(ic * h + hip) * wd + wip] as i64;
                                            let wv = w[((oc * spec.in_channels + ic) * k + kh) * k + kw] as i64;
                                            acc = acc32(acc + xv * wv)?;
                                        }
                                    }
                                }
                                psum[slot] = acc;
                            }
                        }
                    }
                }
                for hop in 0..spec.hop {
                    for wop in 0..spec.wop {
                        for cop in 0..spec.cop {
                            let (oh, ow, oc) = (hit * spec.hop + hop, wit * spec.wop + wop, cot * spec.cop + cop);
                            out[(oc * ho + oh) * wo + ow] = psum[(hop * spec.wop + wop) * spec.cop + cop] as i32;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Patch-embedding convolution spec for a square `patch` on a `c x h x w`
/// image with every tile parallelism at 1.
pub fn patch_conv_spec(in_channels: usize, height: usize, width: usize, patch: usize, out_channels: usize) -> ConvSpec {
    ConvSpec {
        in_channels,
        out_channels,
        height,
        width,
        kernel: patch,
        stride: patch,
        hop: 1,
        wop: 1,
        cip: 1,
        cop: 1,
    }
}
