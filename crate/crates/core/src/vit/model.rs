//! Integer ViT: post-training calibration and the bit-exact forward pass.

use serde::Serialize;

use super::config::{ModelConfig, TiledMatmulSpec};
use super::float::{embed as float_embed, forward_float, patches};
use super::matmul::{conv_step3macs, patch_conv_spec, tiled_matmul_os};
use super::ops::{layernorm_int, ln_out_scale, ln_rsqrt_table, ln_var_num, prob_scales, requant_row, softmax_int, softmax_tables};
use super::trace::Trace;
use super::weights::{image_scale, FloatWeights, Linear};
use crate::lut::{build_requant_table, fuse_gelu_requant, joint_range_calibration, LutTable, SegmentedLutTable};
use crate::quant::{clamp_bits, qrange, requant, round_half_even, symmetric_scale, FixedPointScale};
use crate::{Error, Result};

/// Counters filled by [`IntModel::forward_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub macs: u64,
    pub lookups: u64,
    /// Largest accumulator magnitude seen in any matmul or convolution.
    pub max_abs_acc: i64,
}

impl RunStats {
    pub fn ops(&self) -> u64 {
        2 * self.macs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Logits {
    pub values: Vec<i64>,
    pub scale: f64,
}

impl Logits {
    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64 * self.scale).collect()
    }

    pub fn argmax(&self) -> usize {
        argmax_by(&self.values, |a, b| a.cmp(b))
    }
}

/// First index of the largest element.
pub fn argmax(v: &[f64]) -> usize {
    argmax_by(v, |a, b| a.total_cmp(b))
}

fn argmax_by<T>(v: &[T], cmp: impl Fn(&T, &T) -> std::cmp::Ordering) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if cmp(&v[i], &v[best]).is_gt() {
            best = i;
        }
    }
    best
}

/// What a table approximates, for error reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TableKind {
    Rsqrt { in_scale: f64, eps: f64 },
    Exp { in_scale: f64 },
    Recip { in_scale: f64 },
    Gelu { in_scale: f64 },
    Requant { scale: f64 },
}

impl TableKind {
    pub fn name(&self) -> &'static str {
        match self {
            TableKind::Rsqrt { .. } => "rsqrt",
            TableKind::Exp { .. } => "exp",
            TableKind::Recip { .. } => "recip",
            TableKind::Gelu { .. } => "gelu",
            TableKind::Requant { .. } => "requant",
        }
    }

    /// The real function the table stands for, in real output units.
    pub fn reference(&self) -> Box<dyn Fn(f64) -> f64> {
        match *self {
            TableKind::Rsqrt { in_scale, eps } => Box::new(move |v| 1.0 / (v * in_scale + eps).sqrt()),
            TableKind::Exp { in_scale } => Box::new(move |d| (d * in_scale).exp()),
            TableKind::Recip { in_scale } => Box::new(move |x| 1.0 / (x * in_scale)),
            TableKind::Gelu { in_scale } => Box::new(move |d| crate::lut::special::gelu(d * in_scale)),
            TableKind::Requant { scale } => Box::new(move |d| d * scale),
        }
    }
}

/// Range calibration outcome of one table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCalibration {
    pub name: String,
    pub kind: &'static str,
    pub raw_range: (i64, i64),
    pub raw_repeated: usize,
    pub range: (i64, i64),
    pub repeated: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockScales {
    pub x: f64,
    pub ln1: f64,
    pub q: f64,
    pub k: f64,
    pub v: f64,
    pub prob: f64,
    pub attn: f64,
    pub mid: f64,
    pub ln2: f64,
    pub gelu: f64,
    pub out: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LnStage {
    pub rsqrt: LutTable,
    pub scale: FixedPointScale,
    pub kind: TableKind,
}

impl LnStage {
    fn build(lo: i64, hi: i64, s_x: f64, s_y: f64, ci: usize, cfg: &ModelConfig) -> Result<Self> {
        let t = &cfg.tables;
        let hi = hi.max(lo + 1);
        let rsqrt = ln_rsqrt_table(lo, hi, t.addr_bits, t.rsqrt_bits, s_x, ci, t.ln_eps)?;
        let scale = ln_out_scale(s_x, ci, &rsqrt, s_y)?;
        Ok(Self {
            rsqrt,
            scale,
            kind: TableKind::Rsqrt {
                in_scale: (s_x / ci as f64).powi(2),
                eps: t.ln_eps,
            },
        })
    }

    fn placeholder() -> Self {
        Self {
            rsqrt: LutTable::constant(0, 1, 2, 1.0, 0),
            scale: FixedPointScale::new(1, 0).unwrap(),
            kind: TableKind::Requant { scale: 1.0 },
        }
    }

    fn tokens(&self, x: &[i32], ci: usize, bits: u32, stats: &mut RunStats) -> Result<Vec<i32>> {
        let mut out = Vec::with_capacity(x.len());
        for tok in x.chunks(ci) {
            out.extend(layernorm_int(tok, &self.rsqrt, self.scale, bits)?);
        }
        stats.lookups += (x.len() / ci) as u64;
        Ok(out)
    }
}

/// Integer parameters and tables of one MHA + MLP block pair.
#[derive(Debug, Clone, PartialEq)]
pub struct IntBlock {
    pub scales: BlockScales,
    pub ln1: LnStage,
    pub qkv_w: Vec<i32>,
    pub qkv_bias: Vec<i32>,
    pub qkv_out: [FixedPointScale; 3],
    pub exp: LutTable,
    pub recip: SegmentedLutTable,
    pub score_scale: f64,
    pub prob_out: [FixedPointScale; 2],
    pub rv_out: FixedPointScale,
    pub proj_w: Vec<i32>,
    pub proj_bias: Vec<i32>,
    /// Residual factor applied to the block input before the add.
    pub res1: FixedPointScale,
    pub mid_out: FixedPointScale,
    pub ln2: LnStage,
    pub fc1_w: Vec<i32>,
    pub fc1_bias: Vec<i32>,
    pub gelu: LutTable,
    pub gelu_in_scale: f64,
    pub fc2_w: Vec<i32>,
    pub fc2_bias: Vec<i32>,
    pub res2: FixedPointScale,
    pub out: FixedPointScale,
    /// ReQuant table of the attention residual add, kept as a calibration
    /// artifact; the datapath uses `mid_out`.
    pub requant: LutTable,
}

struct Ctx<'a> {
    cfg: &'a ModelConfig,
    stats: &'a mut RunStats,
    trace: Option<&'a mut Trace>,
}

impl Ctx<'_> {
    fn record(&mut self, name: impl FnOnce() -> String, values: impl FnOnce() -> Vec<f64>) {
        if let Some(t) = self.trace.as_deref_mut() {
            t.record(name(), values());
        }
    }

    fn matmul(
        &mut self,
        x: &[i32],
        w: &[i32],
        bias: Option<&[i32]>,
        dims: (usize, usize, usize),
        dynamic: bool,
        mut post: impl FnMut(usize, usize, i32) -> i32,
    ) -> Result<Vec<i32>> {
        let (t, ci, co) = dims;
        let mut spec = TiledMatmulSpec::new(t, ci, co, 1, ci, 1)?;
        if dynamic {
            spec = spec.dynamic();
        }
        let mut peak = 0i64;
        let y = tiled_matmul_os(x, w, bias, &spec, |r, c, acc| {
            peak = peak.max((acc as i64).abs());
            post(r, c, acc)
        })?;
        self.stats.macs += (t * ci * co) as u64;
        self.stats.max_abs_acc = self.stats.max_abs_acc.max(peak);
        Ok(y)
    }
}

fn deq(x: &[i32], s: f64) -> Vec<f64> {
    x.iter().map(|&v| v as f64 * s).collect()
}

fn add_residual(acc: i32, x: i32, r: FixedPointScale) -> Result<i64> {
    let v = acc as i64 + r.apply(x as i64);
    if v > i32::MAX as i64 || v < i32::MIN as i64 {
        return Err(Error::Overflow(v));
    }
    Ok(v)
}

fn quantize_bias(b: &[f64], scale: f64) -> Result<Vec<i32>> {
    b.iter()
        .map(|v| {
            let q = round_half_even(v / scale);
            if q.abs() > i32::MAX as f64 {
                Err(Error::Overflow(q as i64))
            } else {
                Ok(q as i32)
            }
        })
        .collect()
}

impl IntBlock {
    /// Multi-head attention with the residual add: returns the block's
    /// intermediate activation on the `mid` grid.
    fn mha(&self, x: &[i32], bi: usize, ctx: &mut Ctx) -> Result<Vec<i32>> {
        let bits = ctx.cfg.act_bits;
        let mid: Vec<i32> = self
            .mha_sums(x, bi, ctx)?
            .into_iter()
            .map(|v| requant(v, 0, self.mid_out, bits))
            .collect();
        ctx.record(|| format!("block{bi}.mid"), || deq(&mid, self.scales.mid));
        Ok(mid)
    }

    /// Residual-add sums of the attention half, on the projection
    /// accumulator grid.
    fn mha_sums(&self, x: &[i32], bi: usize, ctx: &mut Ctx) -> Result<Vec<i64>> {
        let cfg = ctx.cfg;
        let (t, ci, hd, bits) = (cfg.tokens, cfg.embed, cfg.head_dim, cfg.act_bits);
        let s = &self.scales;
        let ln1 = self.ln1.tokens(x, ci, bits, ctx.stats)?;
        ctx.record(|| format!("block{bi}.ln1"), || deq(&ln1, s.ln1));
        let qkv = ctx.matmul(&ln1, &self.qkv_w, Some(&self.qkv_bias), (t, ci, 3 * ci), false, |_, co, acc| {
            requant(acc as i64, 0, self.qkv_out[co / ci], bits)
        })?;
        let part = |k: usize| -> Vec<i32> { qkv.chunks(3 * ci).flat_map(|r| r[k * ci..(k + 1) * ci].to_vec()).collect() };
        let (q, k, v) = (part(0), part(1), part(2));
        ctx.record(|| format!("block{bi}.q"), || deq(&q, s.q));
        ctx.record(|| format!("block{bi}.k"), || deq(&k, s.k));
        ctx.record(|| format!("block{bi}.v"), || deq(&v, s.v));

        let mut attn = vec![0i32; t * ci];
        let mut probs_trace = Vec::new();
        for h in 0..cfg.heads {
            let head = |m: &[i32]| -> Vec<i32> { m.chunks(ci).flat_map(|r| r[h * hd..(h + 1) * hd].to_vec()).collect() };
            let (qh, kh, vh) = (head(&q), head(&k), head(&v));
            // transpose module: V is consumed column-wise by the RV matmul
            let mut vt = vec![0i32; hd * t];
            for (j, row) in vh.chunks(hd).enumerate() {
                for (d, &val) in row.iter().enumerate() {
                    vt[d * t + j] = val;
                }
            }
            let scores = ctx.matmul(&qh, &kh, None, (t, hd, t), true, |_, _, acc| acc)?;
            let mut probs = Vec::with_capacity(t * t);
            for row in scores.chunks(t) {
                let r = softmax_int(row, &self.exp, &self.recip)?;
                probs.extend(requant_row(&r, &self.prob_out, bits));
            }
            ctx.stats.lookups += (t * t + t) as u64;
            if ctx.trace.is_some() {
                probs_trace.extend(deq(&probs, s.prob));
            }
            let out = ctx.matmul(&probs, &vt, None, (t, t, hd), true, |_, _, acc| {
                requant(acc as i64, 0, self.rv_out, bits)
            })?;
            for (i, row) in out.chunks(hd).enumerate() {
                attn[i * ci + h * hd..][..hd].copy_from_slice(row);
            }
        }
        ctx.record(|| format!("block{bi}.probs"), || probs_trace);
        ctx.record(|| format!("block{bi}.attn"), || deq(&attn, s.attn));
        let acc = ctx.matmul(&attn, &self.proj_w, Some(&self.proj_bias), (t, ci, ci), false, |_, _, a| a)?;
        acc.iter().zip(x).map(|(&a, &xi)| add_residual(a, xi, self.res1)).collect()
    }

    /// MatMul1 accumulators of the MLP, before the GeLU table.
    fn mlp_hidden_acc(&self, ln2: &[i32], ctx: &mut Ctx) -> Result<Vec<i32>> {
        let (t, ci, h) = (ctx.cfg.tokens, ctx.cfg.embed, ctx.cfg.mlp_hidden);
        ctx.matmul(ln2, &self.fc1_w, Some(&self.fc1_bias), (t, ci, h), false, |_, _, a| a)
    }

    fn mlp(&self, mid: &[i32], bi: usize, ctx: &mut Ctx) -> Result<Vec<i32>> {
        let cfg = ctx.cfg;
        let (t, ci, hid, bits) = (cfg.tokens, cfg.embed, cfg.mlp_hidden, cfg.act_bits);
        let s = &self.scales;
        let ln2 = self.ln2.tokens(mid, ci, bits, ctx.stats)?;
        ctx.record(|| format!("block{bi}.ln2"), || deq(&ln2, s.ln2));
        let hidden = ctx.matmul(&ln2, &self.fc1_w, Some(&self.fc1_bias), (t, ci, hid), false, |_, _, a| {
            self.gelu.lookup(a as i64)
        })?;
        ctx.stats.lookups += hidden.len() as u64;
        ctx.record(|| format!("block{bi}.gelu"), || deq(&hidden, s.gelu));
        let acc = ctx.matmul(&hidden, &self.fc2_w, Some(&self.fc2_bias), (t, hid, ci), false, |_, _, a| a)?;
        let out = acc
            .iter()
            .zip(mid)
            .map(|(&a, &m)| Ok(requant(add_residual(a, m, self.res2)?, 0, self.out, bits)))
            .collect::<Result<Vec<i32>>>()?;
        ctx.record(|| format!("block{bi}.out"), || deq(&out, s.out));
        Ok(out)
    }

    pub fn table_kinds(&self) -> [(String, TableKind, &LutTable); 6] {
        [
            ("ln1.rsqrt".into(), self.ln1.kind, &self.ln1.rsqrt),
            ("softmax.exp".into(), TableKind::Exp { in_scale: self.score_scale }, &self.exp),
            ("softmax.recip.low".into(), TableKind::Recip { in_scale: self.exp.out_scale() }, self.recip.low()),
            ("softmax.recip.high".into(), TableKind::Recip { in_scale: self.exp.out_scale() }, self.recip.high()),
            ("ln2.rsqrt".into(), self.ln2.kind, &self.ln2.rsqrt),
            ("mlp.gelu".into(), TableKind::Gelu { in_scale: self.gelu_in_scale }, &self.gelu),
        ]
    }
}

/// Calibrated integer model.
#[derive(Debug, Clone, PartialEq)]
pub struct IntModel {
    pub config: ModelConfig,
    pub image_scale: f64,
    pub patch_w: Vec<i32>,
    /// `patch_tokens x CI` bias (patch bias + positional embedding) on the
    /// accumulator grid.
    pub embed_bias: Vec<i32>,
    pub embed_out: FixedPointScale,
    pub embed_scale: f64,
    pub cls: Option<Vec<i32>>,
    pub blocks: Vec<IntBlock>,
    pub final_ln: LnStage,
    pub final_scale: f64,
    pub head_w: Vec<i32>,
    pub head_bias: Vec<i64>,
    pub head_scale: f64,
    pub calibration: Vec<TableCalibration>,
}

/// Activation scale of a site: the clipping of the max-abs range that
/// minimizes the quantization MSE of the recorded values.
fn site_scale(traces: &[Trace], site: &str, bits: u32) -> f64 {
    let m = traces.iter().filter_map(|t| t.max_abs(site)).fold(0.0, f64::max);
    let (lo, hi) = qrange(bits);
    let mse = |s: f64| -> f64 {
        traces
            .iter()
            .filter_map(|t| t.get(site))
            .flatten()
            .map(|&v| {
                let q = round_half_even(v / s).clamp(lo as f64, hi as f64);
                (v - q * s).powi(2)
            })
            .sum()
    };
    let mut best = symmetric_scale(m, bits);
    let mut best_err = mse(best);
    for k in 1..=14 {
        let s = symmetric_scale(m * (1.0 - 0.05 * k as f64), bits);
        let e = mse(s);
        if e < best_err {
            best = s;
            best_err = e;
        }
    }
    best
}

fn min_max(v: &[i64]) -> (i64, i64) {
    let lo = v.iter().copied().min().unwrap_or(0);
    let hi = v.iter().copied().max().unwrap_or(0);
    (lo, hi.max(lo + 1))
}

/// Builds a clamped-curve table over the samples, narrowed by joint range
/// calibration when enabled.
fn calibrated_table(
    name: String,
    kind: TableKind,
    samples: &[i64],
    cfg: &ModelConfig,
    build: impl Fn(i64, i64) -> Result<LutTable>,
) -> Result<(LutTable, TableCalibration)> {
    let (lo, hi) = min_max(samples);
    let raw = build(lo, hi)?;
    let raw_repeated = raw.repeated_entries();
    let mut rec = TableCalibration {
        name,
        kind: kind.name(),
        raw_range: (lo, hi),
        raw_repeated,
        range: (lo, hi),
        repeated: raw_repeated,
        iterations: 1,
        converged: true,
    };
    if !cfg.tables.joint_calibration {
        return Ok((raw, rec));
    }
    let cal = joint_range_calibration(&[lo, hi], &build, cfg.tables.max_calibration_iters)?;
    rec.range = (cal.alpha, cal.beta);
    rec.repeated = cal.table.repeated_entries();
    rec.iterations = cal.iterations;
    rec.converged = cal.converged;
    Ok((cal.table, rec))
}

impl IntModel {
    /// Post-training calibration from real-valued weights.
    ///
    /// Weights are quantized per tensor. Activation scales come from the
    /// float reference run on `images` (with the same quantized weights);
    /// table input ranges come from the integer model itself, calibrated one
    /// stage at a time over the whole image batch.
    pub fn calibrate(weights: &FloatWeights, images: &[Vec<f64>]) -> Result<Self> {
        let cfg = weights.config.clone();
        cfg.validate()?;
        if images.is_empty() {
            return Err(Error::invalid("calibration needs at least one image"));
        }
        let (bits, wbits, ci, t) = (cfg.act_bits, cfg.weight_bits, cfg.embed, cfg.tokens);
        let fq = weights.fake_quant();
        let traces = images
            .iter()
            .map(|img| {
                let mut tr = Trace::default();
                forward_float(&fq, img, Some(&mut tr))?;
                Ok(tr)
            })
            .collect::<Result<Vec<_>>>()?;
        let sc = |site: &str| site_scale(&traces, site, bits);

        // patch embedding
        let s_img = image_scale(bits);
        let (patch_w, s_pw) = fq.patch.quantized(wbits);
        let embed_scale = sc("embed");
        let acc_scale = s_img * s_pw;
        let n_patch = cfg.patch_tokens();
        let off = cfg.class_token as usize;
        let mut embed_bias = Vec::with_capacity(n_patch * ci);
        for p in 0..n_patch {
            let row: Vec<f64> = (0..ci).map(|c| fq.patch.bias[c] + fq.pos[(p + off) * ci + c]).collect();
            embed_bias.extend(quantize_bias(&row, acc_scale)?);
        }
        let cls = fq.cls.as_ref().map(|c| {
            c.iter()
                .zip(&fq.pos[..ci])
                .map(|(a, b)| clamp_bits(round_half_even((a + b) / embed_scale) as i64, bits))
                .collect()
        });
        let mut model = IntModel {
            image_scale: s_img,
            patch_w,
            embed_bias,
            embed_out: FixedPointScale::from_f64(acc_scale / embed_scale)?,
            embed_scale,
            cls,
            blocks: Vec::new(),
            final_ln: LnStage::placeholder(),
            final_scale: sc("final_ln"),
            head_w: Vec::new(),
            head_bias: Vec::new(),
            head_scale: 1.0,
            calibration: Vec::new(),
            config: cfg.clone(),
        };
        let mut stats = RunStats::default();
        let mut xs = images
            .iter()
            .map(|img| model.embed(&model.quantize_image(img)?, &mut stats))
            .collect::<Result<Vec<_>>>()?;

        let mut s_x = embed_scale;
        for (bi, bw) in fq.blocks.iter().enumerate() {
            let p = format!("block{bi}");
            let scales = BlockScales {
                x: s_x,
                ln1: sc(&format!("{p}.ln1")),
                q: sc(&format!("{p}.q")),
                k: sc(&format!("{p}.k")),
                v: sc(&format!("{p}.v")),
                prob: 1.0 / qrange(bits).1 as f64,
                attn: sc(&format!("{p}.attn")),
                mid: sc(&format!("{p}.mid")),
                ln2: sc(&format!("{p}.ln2")),
                gelu: sc(&format!("{p}.gelu")),
                out: sc(&format!("{p}.out")),
            };
            let (blk, recs, next) = Self::calibrate_block(&cfg, bi, bw, scales, &xs)?;
            model.calibration.extend(recs);
            model.blocks.push(blk);
            xs = next;
            s_x = model.blocks[bi].scales.out;
        }

        // final LayerNorm and head
        let vars: Vec<i64> = xs.iter().flat_map(|x| x.chunks(ci).map(ln_var_num)).collect();
        let (lo, hi) = min_max(&vars);
        model.final_ln = LnStage::build(lo, hi, s_x, model.final_scale, ci, &cfg)?;
        let (head_w, s_hw) = fq.head.quantized(wbits);
        let n_pool = if cfg.class_token { 1 } else { t };
        model.head_w = head_w;
        model.head_bias = quantize_bias(&fq.head.bias, model.final_scale * s_hw)?
            .into_iter()
            .map(|b| b as i64 * n_pool as i64)
            .collect();
        model.head_scale = model.final_scale * s_hw / n_pool as f64;
        Ok(model)
    }

    #[allow(clippy::type_complexity)]
    fn calibrate_block(
        cfg: &ModelConfig,
        bi: usize,
        bw: &super::weights::BlockWeights,
        s: BlockScales,
        xs: &[Vec<i32>],
    ) -> Result<(IntBlock, Vec<TableCalibration>, Vec<Vec<i32>>)> {
        let (bits, wbits, ci, hd) = (cfg.act_bits, cfg.weight_bits, cfg.embed, cfg.head_dim);
        let tc = &cfg.tables;
        let quant = |l: &Linear, in_scale: f64| -> Result<(Vec<i32>, Vec<i32>, f64)> {
            let (w, sw) = l.quantized(wbits);
            Ok((w, quantize_bias(&l.bias, in_scale * sw)?, sw))
        };
        let (qkv_w, qkv_bias, s_qkv) = quant(&bw.qkv, s.ln1)?;
        let (proj_w, proj_bias, s_pw) = quant(&bw.proj, s.attn)?;
        let (fc1_w, fc1_bias, s_w1) = quant(&bw.fc1, s.ln2)?;
        let (fc2_w, fc2_bias, s_w2) = quant(&bw.fc2, s.gelu)?;
        let acc_qkv = s.ln1 * s_qkv;
        let score_scale = s.q * s.k / (hd as f64).sqrt();
        let (exp, recip) = softmax_tables(score_scale, cfg.tokens, tc.addr_bits, tc.exp_bits, tc.recip_bits)?;
        let prob_out = prob_scales(&exp, &recip, s.prob)?;
        let proj_acc = s.attn * s_pw;
        let fc2_acc = s.gelu * s_w2;
        let gelu_in_scale = s.ln2 * s_w1;
        let mut blk = IntBlock {
            ln1: LnStage::placeholder(),
            qkv_w,
            qkv_bias,
            qkv_out: [
                FixedPointScale::from_f64(acc_qkv / s.q)?,
                FixedPointScale::from_f64(acc_qkv / s.k)?,
                FixedPointScale::from_f64(acc_qkv / s.v)?,
            ],
            exp,
            recip,
            score_scale,
            prob_out,
            rv_out: FixedPointScale::from_f64(s.prob * s.v / s.attn)?,
            proj_w,
            proj_bias,
            res1: FixedPointScale::from_f64(s.x / proj_acc)?,
            mid_out: FixedPointScale::from_f64(proj_acc / s.mid)?,
            ln2: LnStage::placeholder(),
            fc1_w,
            fc1_bias,
            gelu: LutTable::constant(0, 1, bits, s.gelu, 0),
            gelu_in_scale,
            fc2_w,
            fc2_bias,
            res2: FixedPointScale::from_f64(s.mid / fc2_acc)?,
            out: FixedPointScale::from_f64(fc2_acc / s.out)?,
            requant: LutTable::constant(0, 1, bits, 1.0, 0),
            scales: s.clone(),
        };
        let mut stats = RunStats::default();
        let mut ctx = Ctx {
            cfg,
            stats: &mut stats,
            trace: None,
        };
        let mut recs = Vec::new();

        let vars: Vec<i64> = xs.iter().flat_map(|x| x.chunks(ci).map(ln_var_num)).collect();
        let (lo, hi) = min_max(&vars);
        blk.ln1 = LnStage::build(lo, hi, s.x, s.ln1, ci, cfg)?;
        let mut sums = Vec::new();
        let mut mids = Vec::with_capacity(xs.len());
        for x in xs {
            let v = blk.mha_sums(x, bi, &mut ctx)?;
            mids.push(v.iter().map(|&a| requant(a, 0, blk.mid_out, bits)).collect::<Vec<i32>>());
            sums.extend(v);
        }

        // ReQuant table over the attention residual-add sums
        let rq_scale = blk.mid_out.value();
        let (requant_table, rec) = calibrated_table(
            format!("block{bi}.residual.requant"),
            TableKind::Requant { scale: rq_scale },
            &sums,
            cfg,
            |a, b| build_requant_table(a, b, tc.addr_bits, bits, rq_scale),
        )?;
        blk.requant = requant_table;
        recs.push(rec);

        let vars: Vec<i64> = mids.iter().flat_map(|x| x.chunks(ci).map(ln_var_num)).collect();
        let (lo, hi) = min_max(&vars);
        blk.ln2 = LnStage::build(lo, hi, s.mid, s.ln2, ci, cfg)?;
        let mut accs = Vec::new();
        for m in &mids {
            let ln2 = blk.ln2.tokens(m, ci, bits, ctx.stats)?;
            accs.extend(blk.mlp_hidden_acc(&ln2, &mut ctx)?.into_iter().map(|a| a as i64));
        }
        let (gelu, rec) = calibrated_table(
            format!("block{bi}.mlp.gelu"),
            TableKind::Gelu { in_scale: gelu_in_scale },
            &accs,
            cfg,
            |a, b| fuse_gelu_requant(gelu_in_scale, s.gelu, bits, a, b, tc.addr_bits),
        )?;
        blk.gelu = gelu;
        recs.push(rec);
        let outs = mids.iter().map(|m| blk.mlp(m, bi, &mut ctx)).collect::<Result<Vec<_>>>()?;
        Ok((blk, recs, outs))
    }

    pub fn quantize_image(&self, image: &[f64]) -> Result<Vec<i32>> {
        if image.len() != self.config.image_len() {
            return Err(Error::ShapeMismatch(format!(
                "image has {} values, config expects {}",
                image.len(),
                self.config.image_len()
            )));
        }
        Ok(image
            .iter()
            .map(|v| clamp_bits(round_half_even(v / self.image_scale) as i64, self.config.act_bits))
            .collect())
    }

    fn embed(&self, img: &[i32], stats: &mut RunStats) -> Result<Vec<i32>> {
        let c = &self.config;
        let (ci, bits) = (c.embed, c.act_bits);
        let spec = patch_conv_spec(c.in_channels, c.image_height, c.image_width, c.patch, ci);
        let conv = conv_step3macs(img, &self.patch_w, &spec)?;
        let n_patch = c.patch_tokens();
        stats.macs += (n_patch * ci * c.patch_dim()) as u64;
        let mut x = Vec::with_capacity(c.tokens * ci);
        if let Some(cls) = &self.cls {
            x.extend_from_slice(cls);
        }
        for p in 0..n_patch {
            for ch in 0..ci {
                let acc = conv[ch * n_patch + p] as i64 + self.embed_bias[p * ci + ch] as i64;
                stats.max_abs_acc = stats.max_abs_acc.max(acc.abs());
                x.push(requant(acc, 0, self.embed_out, bits));
            }
        }
        Ok(x)
    }

    pub fn forward(&self, image: &[f64]) -> Result<Logits> {
        self.forward_with(image, None, None)
    }

    pub fn forward_with(&self, image: &[f64], stats: Option<&mut RunStats>, trace: Option<&mut Trace>) -> Result<Logits> {
        let img = self.quantize_image(image)?;
        self.forward_int(&img, stats, trace)
    }

    /// Forward pass from an image already on the input grid.
    pub fn forward_int(&self, img: &[i32], stats: Option<&mut RunStats>, trace: Option<&mut Trace>) -> Result<Logits> {
        let c = &self.config;
        if img.len() != c.image_len() {
            return Err(Error::ShapeMismatch(format!("image has {} values, expected {}", img.len(), c.image_len())));
        }
        let mut local = RunStats::default();
        let mut ctx = Ctx {
            cfg: c,
            stats: stats.unwrap_or(&mut local),
            trace,
        };
        let (ci, t) = (c.embed, c.tokens);
        let mut x = self.embed(img, ctx.stats)?;
        ctx.record(|| "embed".into(), || deq(&x, self.embed_scale));
        for (bi, blk) in self.blocks.iter().enumerate() {
            let mid = blk.mha(&x, bi, &mut ctx)?;
            x = blk.mlp(&mid, bi, &mut ctx)?;
        }
        let fin = self.final_ln.tokens(&x, ci, c.act_bits, ctx.stats)?;
        ctx.record(|| "final_ln".into(), || deq(&fin, self.final_scale));
        let pooled: Vec<i64> = if c.class_token {
            fin[..ci].iter().map(|&v| v as i64).collect()
        } else {
            (0..ci).map(|ch| (0..t).map(|i| fin[i * ci + ch] as i64).sum()).collect()
        };
        let values: Vec<i64> = self
            .head_w
            .chunks(ci)
            .zip(&self.head_bias)
            .map(|(w, &b)| b + w.iter().zip(&pooled).map(|(&a, &p)| a as i64 * p).sum::<i64>())
            .collect();
        ctx.stats.macs += (c.classes * ci) as u64;
        let logits = Logits {
            values,
            scale: self.head_scale,
        };
        ctx.record(|| "logits".into(), || logits.real());
        Ok(logits)
    }

    /// Every table with a name and the function it approximates.
    pub fn tables(&self) -> Vec<(String, TableKind, &LutTable)> {
        let mut v = Vec::new();
        for (bi, b) in self.blocks.iter().enumerate() {
            for (name, kind, t) in b.table_kinds() {
                v.push((format!("block{bi}.{name}"), kind, t));
            }
            v.push((
                format!("block{bi}.residual.requant"),
                TableKind::Requant { scale: b.mid_out.value() },
                &b.requant,
            ));
        }
        v.push(("final.rsqrt".into(), self.final_ln.kind, &self.final_ln.rsqrt));
        v
    }
}

/// Attention half of block `bi` on one image (`T x CI` on the block input grid).
pub fn mha_block(model: &IntModel, bi: usize, x: &[i32]) -> Result<Vec<i32>> {
    let blk = model.blocks.get(bi).ok_or_else(|| Error::invalid(format!("no block {bi}")))?;
    check_tokens(model, x)?;
    let mut stats = RunStats::default();
    blk.mha(x, bi, &mut Ctx { cfg: &model.config, stats: &mut stats, trace: None })
}

/// MLP half of block `bi` on one image (`T x CI` on the block's `mid` grid).
pub fn mlp_block(model: &IntModel, bi: usize, x: &[i32]) -> Result<Vec<i32>> {
    let blk = model.blocks.get(bi).ok_or_else(|| Error::invalid(format!("no block {bi}")))?;
    check_tokens(model, x)?;
    let mut stats = RunStats::default();
    blk.mlp(x, bi, &mut Ctx { cfg: &model.config, stats: &mut stats, trace: None })
}

fn check_tokens(model: &IntModel, x: &[i32]) -> Result<()> {
    let want = model.config.tokens * model.config.embed;
    if x.len() != want {
        return Err(Error::ShapeMismatch(format!("expected {want} activations, got {}", x.len())));
    }
    Ok(())
}

/// Token embeddings of the float reference, flattened (for block tests).
pub fn float_tokens(w: &FloatWeights, image: &[f64]) -> Result<Vec<f64>> {
    Ok(float_embed(w, image)?.into_iter().flatten().collect())
}

/// Patches of an image in token order, as used by the patch embedding.
pub fn image_patches(cfg: &ModelConfig, image: &[f64]) -> Vec<Vec<f64>> {
    patches(image, cfg.in_channels, cfg.image_height, cfg.image_width, cfg.patch)
}
