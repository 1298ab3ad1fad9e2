//! Integer LayerNorm and Softmax built on lookup tables.

use crate::lut::{build_exp_table, build_rsqrt_table, build_segmented_recip, LutTable, Segment, SegmentedLutTable};
use crate::quant::{qrange, requant, FixedPointScale};
use crate::{Error, Result};

/// `CI * sum(x^2) - sum(x)^2`, i.e. `CI^2` times the token variance in
/// input units.
pub fn ln_var_num(x: &[i32]) -> i64 {
    let n = x.len() as i64;
    let sum: i64 = x.iter().map(|&v| v as i64).sum();
    let sq: i64 = x.iter().map(|&v| v as i64 * v as i64).sum();
    n * sq - sum * sum
}

/// Rsqrt table over variance numerators of `ci`-wide tokens quantized with
/// `s_x`: `f(v) = 1 / sqrt(v * s_x^2 / ci^2 + eps)`.
pub fn ln_rsqrt_table(alpha: i64, beta: i64, addr_bits: u32, out_bits: u32, s_x: f64, ci: usize, eps: f64) -> Result<LutTable> {
    let in_scale = (s_x / ci as f64).powi(2);
    build_rsqrt_table(alpha, beta, addr_bits, out_bits, in_scale, eps)
}

/// Requant scale taking `(ci * x - sum) * rsqrt` onto the output grid `s_y`.
pub fn ln_out_scale(s_x: f64, ci: usize, rsqrt: &LutTable, s_y: f64) -> Result<FixedPointScale> {
    FixedPointScale::from_f64(s_x * rsqrt.out_scale() / (ci as f64 * s_y))
}

/// LayerNorm without affine parameters on one token.
///
/// Three passes: the sum, the sum of squares (64-bit), then
/// `requant((CI * x - sum) * Rsqrt(var))`.
pub fn layernorm_int(x: &[i32], rsqrt: &LutTable, out_scale: FixedPointScale, out_bits: u32) -> Result<Vec<i32>> {
    if x.len() < 2 {
        return Err(Error::invalid("LayerNorm needs at least two channels"));
    }
    let n = x.len() as i64;
    let sum: i64 = x.iter().map(|&v| v as i64).sum();
    let sq: i64 = x.iter().map(|&v| v as i64 * v as i64).sum();
    let r = rsqrt.lookup(n * sq - sum * sum) as i64;
    Ok(x.iter()
        .map(|&v| requant((n * v as i64 - sum) * r, 0, out_scale, out_bits))
        .collect())
}

/// One Softmax row: integer products `e * r` sharing `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRow {
    pub values: Vec<i32>,
    pub scale: f64,
    pub segment: Segment,
    /// Table index used for the row maximum.
    pub max_index: usize,
    pub denominator: i64,
}

impl SoftmaxRow {
    pub fn real(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(|&v| v as f64 * self.scale)
    }
}

/// Three-pass Softmax: max-reduce, Exp lookup of `s - max` with running
/// sum, Recip lookup of the sum and multiply.
pub fn softmax_int(scores: &[i32], exp: &LutTable, recip: &SegmentedLutTable) -> Result<SoftmaxRow> {
    let Some(&max) = scores.iter().max() else {
        return Err(Error::invalid("empty softmax row"));
    };
    let mut e = Vec::with_capacity(scores.len());
    let mut sum = 0i64;
    for &s in scores {
        let v = exp.lookup(s as i64 - max as i64);
        sum += v as i64;
        e.push(v);
    }
    let r = recip.lookup(sum);
    Ok(SoftmaxRow {
        values: e.iter().map(|&v| v * r.value).collect(),
        scale: exp.out_scale() * r.scale,
        segment: r.segment,
        max_index: exp.index(0),
        denominator: sum,
    })
}

/// Exp and segmented Recip tables for rows of `n` scores in units of
/// `score_scale` (the `1/sqrt(d)` factor included).
///
/// The Exp domain starts where the last entry quantizes to 0, so clamping
/// more negative inputs to `alpha` is exact.
pub fn softmax_tables(score_scale: f64, n: usize, addr_bits: u32, exp_bits: u32, recip_bits: u32) -> Result<(LutTable, SegmentedLutTable)> {
    if !(score_scale > 0.0 && score_scale.is_finite()) || n == 0 {
        return Err(Error::invalid("softmax tables need a positive score scale and row length"));
    }
    let (_, qmax) = qrange(exp_bits);
    let cutoff = (2.0 * qmax as f64).ln() / score_scale;
    let mut alpha = -(cutoff.ceil() as i64).max(1);
    let mut exp = build_exp_table(alpha, addr_bits, exp_bits, score_scale)?;
    // entries sample the bin edge nearest 0, so widen until the last one is 0
    for _ in 0..64 {
        if exp.lookup(alpha) == 0 {
            break;
        }
        alpha -= (alpha.abs() / 16).max(1);
        exp = build_exp_table(alpha, addr_bits, exp_bits, score_scale)?;
    }
    let beta = (n as i64 * qmax as i64).max(16);
    let recip = build_segmented_recip(beta, addr_bits, recip_bits, exp.out_scale())?;
    Ok((exp, recip))
}

/// Requant scales from each Recip segment onto a probability grid `s_a`.
pub fn prob_scales(exp: &LutTable, recip: &SegmentedLutTable, s_a: f64) -> Result<[FixedPointScale; 2]> {
    Ok([
        FixedPointScale::from_f64(exp.out_scale() * recip.low().out_scale() / s_a)?,
        FixedPointScale::from_f64(exp.out_scale() * recip.high().out_scale() / s_a)?,
    ])
}

pub fn requant_row(row: &SoftmaxRow, scales: &[FixedPointScale; 2], bits: u32) -> Vec<i32> {
    let s = scales[match row.segment {
        Segment::Low => 0,
        Segment::High => 1,
    }];
    row.values.iter().map(|&v| requant(v as i64, 0, s, bits)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn float_ln(x: &[f64], eps: f64) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        x.iter().map(|v| (v - mean) / (var + eps).sqrt()).collect()
    }

    #[test]
    fn constant_token_normalizes_to_zero() {
        let t = ln_rsqrt_table(0, 1000, 6, 12, 0.1, 8, 1e-5).unwrap();
        let s = ln_out_scale(0.1, 8, &t, 0.25).unwrap();
        assert_eq!(layernorm_int(&[5; 8], &t, s, 4).unwrap(), vec![0; 8]);
    }

    #[test]
    fn alternating_token() {
        let (a, s_x, s_y) = (3, 0.1, 0.25);
        let x: Vec<i32> = (0..8).map(|i| if i % 2 == 0 { a } else { -a }).collect();
        let v = ln_var_num(&x);
        let t = ln_rsqrt_table(v - 10, v + 10, 6, 12, s_x, 8, 1e-5).unwrap();
        let y = layernorm_int(&x, &t, ln_out_scale(s_x, 8, &t, s_y).unwrap(), 4).unwrap();
        // normalized values are +-1, i.e. +-4 on a 0.25 grid
        for (i, v) in y.iter().enumerate() {
            assert_eq!(*v, if i % 2 == 0 { 4 } else { -4 });
        }
        assert_eq!(y.iter().sum::<i32>(), 0);
    }

    #[test]
    fn random_tokens_within_table_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (ci, s_x, s_y, eps) = (64, 0.2, 1.0 / 32.0, 1e-5);
        let tokens: Vec<Vec<i32>> = (0..200).map(|_| (0..ci).map(|_| rng.gen_range(-8..8)).collect()).collect();
        let vars: Vec<i64> = tokens.iter().map(|t| ln_var_num(t)).collect();
        let (lo, hi) = (*vars.iter().min().unwrap(), *vars.iter().max().unwrap());
        let t = ln_rsqrt_table(lo, hi, 6, 12, s_x, ci, eps).unwrap();
        let scale = ln_out_scale(s_x, ci, &t, s_y).unwrap();
        // worst relative rsqrt error over the table, measured on its own inputs
        let f = |v: f64| 1.0 / (v * (s_x / ci as f64).powi(2) + eps).sqrt();
        let rel = (lo..=hi).map(|v| (t.eval(v) - f(v as f64)).abs() / f(v as f64)).fold(0.0, f64::max);
        for tok in &tokens {
            let y = layernorm_int(tok, &t, scale, 8).unwrap();
            let real: Vec<f64> = tok.iter().map(|&v| v as f64 * s_x).collect();
            let want = float_ln(&real, eps);
            for (a, b) in y.iter().zip(&want) {
                let bound = b.abs() * rel + 0.5 * s_y + 1e-9;
                assert!((*a as f64 * s_y - b).abs() <= bound, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn uniform_row_gives_one_over_n() {
        let (exp, recip) = softmax_tables(0.05, 8, 6, 8, 8).unwrap();
        let row = softmax_int(&[3; 8], &exp, &recip).unwrap();
        assert_eq!(row.max_index, 0);
        assert!(row.values.windows(2).all(|w| w[0] == w[1]));
        let p = row.real().next().unwrap();
        assert!((p - 0.125).abs() < 0.01, "{p}");
    }

    #[test]
    fn dominant_score_saturates() {
        let (exp, recip) = softmax_tables(0.05, 5, 6, 8, 8).unwrap();
        let row = softmax_int(&[1000, -1000, -1000, -1000, -1000], &exp, &recip).unwrap();
        let p: Vec<f64> = row.real().collect();
        // a lone exp(0) sits near the bottom of the high Recip segment,
        // where one 16-wide bin costs about 6% of 1/x
        assert!((p[0] - 1.0).abs() < 0.1, "{}", p[0]);
        assert!(p[1..].iter().all(|&v| v == 0.0));
    }

    fn max_table_error(t: &LutTable, f: impl Fn(f64) -> f64) -> f64 {
        t.error_against(f, t.domain_inputs(100_000)).max_abs
    }

    #[test]
    fn random_rows_track_float_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 196;
        let scale = 0.125;
        let (exp, recip) = softmax_tables(scale, n, 6, 8, 8).unwrap();
        let exp_err = max_table_error(&exp, |d| (d * scale).exp());
        let s_e = exp.out_scale();
        let recip_err = max_table_error(recip.low(), |x| 1.0 / (x * s_e)).max(max_table_error(recip.high(), |x| 1.0 / (x * s_e)));
        for _ in 0..50 {
            let s: Vec<i32> = (0..n).map(|_| rng.gen_range(-64..64)).collect();
            let row = softmax_int(&s, &exp, &recip).unwrap();
            let m = *s.iter().max().unwrap() as f64;
            let z: f64 = s.iter().map(|&v| ((v as f64 - m) * scale).exp()).sum();
            let l1: f64 = row.real().zip(&s).map(|(p, &v)| (p - ((v as f64 - m) * scale).exp() / z).abs()).sum();
            let sum: f64 = row.real().sum();
            let quantum = recip.segment(row.segment).out_scale();
            assert!((sum - 1.0).abs() <= n as f64 * quantum, "sum {sum}");
            assert!(l1 <= n as f64 * (exp_err + recip_err), "l1 {l1}");
        }
    }

    #[test]
    fn empty_row_is_an_error() {
        let (exp, recip) = softmax_tables(0.05, 4, 6, 8, 8).unwrap();
        assert!(softmax_int(&[], &exp, &recip).is_err());
    }
}
