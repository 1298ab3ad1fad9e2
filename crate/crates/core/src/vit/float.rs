//! Float reference forward pass.
//!
//! Same graph as the integer model: LayerNorm without affine parameters,
//! exact GeLU, residual adds and a mean-pool (or class-token) head.

use super::trace::Trace;
use super::weights::{FloatWeights, Linear};
use crate::lut::special::gelu;
use crate::{Error, Result};

/// Splits a `C x H x W` image into row-major `p x p` patches flattened as
/// `C x p x p`.
pub fn patches(image: &[f64], c: usize, h: usize, w: usize, p: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity((h / p) * (w / p));
    for ph in 0..h / p {
        for pw in 0..w / p {
            let mut v = Vec::with_capacity(c * p * p);
            for ch in 0..c {
                for kh in 0..p {
                    let row = (ch * h + ph * p + kh) * w + pw * p;
                    v.extend_from_slice(&image[row..row + p]);
                }
            }
            out.push(v);
        }
    }
    out
}

pub fn layernorm(x: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let r = 1.0 / (var + eps).sqrt();
    x.iter().map(|v| (v - mean) * r).collect()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn apply_rows(l: &Linear, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter().map(|r| l.apply(r)).collect()
}

fn flat(x: &[Vec<f64>]) -> Vec<f64> {
    x.iter().flatten().copied().collect()
}

/// Token embeddings after patch projection, positional embedding and the
/// optional class token.
pub fn embed(w: &FloatWeights, image: &[f64]) -> Result<Vec<Vec<f64>>> {
    let c = &w.config;
    if image.len() != c.image_len() {
        return Err(Error::ShapeMismatch(format!(
            "image has {} values, config expects {}",
            image.len(),
            c.image_len()
        )));
    }
    let mut tokens = Vec::with_capacity(c.tokens);
    if let Some(cls) = &w.cls {
        tokens.push(cls.clone());
    }
    for p in patches(image, c.in_channels, c.image_height, c.image_width, c.patch) {
        tokens.push(w.patch.apply(&p));
    }
    for (t, tok) in tokens.iter_mut().enumerate() {
        for (ch, v) in tok.iter_mut().enumerate() {
            *v += w.pos[t * c.embed + ch];
        }
    }
    Ok(tokens)
}

/// Logits of the float reference. Intermediate activations are recorded
/// in `trace` under the same site names as the integer model.
pub fn forward_float(w: &FloatWeights, image: &[f64], mut trace: Option<&mut Trace>) -> Result<Vec<f64>> {
    let c = &w.config;
    let eps = c.tables.ln_eps;
    let (t_len, ci, hd) = (c.tokens, c.embed, c.head_dim);
    let mut x = embed(w, image)?;
    let mut rec = |name: String, v: &dyn Fn() -> Vec<f64>| {
        if let Some(t) = trace.as_deref_mut() {
            t.record(name, v());
        }
    };
    rec("embed".into(), &|| flat(&x));
    for (bi, b) in w.blocks.iter().enumerate() {
        let ln1: Vec<Vec<f64>> = x.iter().map(|r| layernorm(r, eps)).collect();
        let qkv = apply_rows(&b.qkv, &ln1);
        let part = |k: usize| -> Vec<Vec<f64>> { qkv.iter().map(|r| r[k * ci..(k + 1) * ci].to_vec()).collect() };
        let (q, k, v) = (part(0), part(1), part(2));
        let mut probs_all = Vec::new();
        let mut attn = vec![vec![0.0; ci]; t_len];
        for h in 0..c.heads {
            let off = h * hd;
            for i in 0..t_len {
                let scores: Vec<f64> = (0..t_len)
                    .map(|j| (0..hd).map(|d| q[i][off + d] * k[j][off + d]).sum::<f64>() / (hd as f64).sqrt())
                    .collect();
                let p = softmax(&scores);
                for d in 0..hd {
                    attn[i][off + d] = (0..t_len).map(|j| p[j] * v[j][off + d]).sum();
                }
                probs_all.extend(p);
            }
        }
        let proj = apply_rows(&b.proj, &attn);
        let mid: Vec<Vec<f64>> = x.iter().zip(&proj).map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v).collect()).collect();
        let ln2: Vec<Vec<f64>> = mid.iter().map(|r| layernorm(r, eps)).collect();
        let hidden: Vec<Vec<f64>> = apply_rows(&b.fc1, &ln2)
            .into_iter()
            .map(|r| r.into_iter().map(gelu).collect())
            .collect();
        let mlp = apply_rows(&b.fc2, &hidden);
        let out: Vec<Vec<f64>> = mid.iter().zip(&mlp).map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v).collect()).collect();
        let p = format!("block{bi}");
        rec(format!("{p}.ln1"), &|| flat(&ln1));
        rec(format!("{p}.q"), &|| flat(&q));
        rec(format!("{p}.k"), &|| flat(&k));
        rec(format!("{p}.v"), &|| flat(&v));
        rec(format!("{p}.probs"), &|| probs_all.clone());
        rec(format!("{p}.attn"), &|| flat(&attn));
        rec(format!("{p}.mid"), &|| flat(&mid));
        rec(format!("{p}.ln2"), &|| flat(&ln2));
        rec(format!("{p}.gelu"), &|| flat(&hidden));
        rec(format!("{p}.out"), &|| flat(&out));
        x = out;
    }
    let fin: Vec<Vec<f64>> = x.iter().map(|r| layernorm(r, eps)).collect();
    let pooled: Vec<f64> = if c.class_token {
        fin[0].clone()
    } else {
        (0..ci).map(|ch| fin.iter().map(|r| r[ch]).sum::<f64>() / t_len as f64).collect()
    };
    let logits = w.head.apply(&pooled);
    rec("final_ln".into(), &|| flat(&fin));
    rec("logits".into(), &|| logits.clone());
    Ok(logits)
}
