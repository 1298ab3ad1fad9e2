//! Transformer block graphs built from a parallelism config.
//!
//! The LayerNorm output fans out to four branches: the residual through a
//! deep FIFO, Q through a deep FIFO, K into a deep buffer and V through a
//! transpose stage into a deep buffer. QK waits for the full K of the
//! image, RV for the full V. The MLP half streams, with its residual on a
//! deep FIFO.

use hgpipe_core::vit::ModelConfig;
use hgpipe_resource::ParallelismConfig;

use crate::graph::{ChannelKind, ChannelSpec, Graph, StageSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphOptions {
    /// Depth of ordinary stage-to-stage FIFOs.
    pub fifo_depth: u64,
    /// Depth of the residual and Q FIFOs, and the staging area of deep
    /// buffers.
    pub deep_depth: u64,
    /// Cycles per tile of the ideal input stream.
    pub source_cost: u64,
    /// Cycles per tile of the V transpose stage.
    pub transpose_cost: u64,
    /// Blocks chained one after another.
    pub blocks: usize,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            fifo_depth: 2,
            deep_depth: 512,
            source_cost: 1,
            transpose_cost: 1,
            blocks: 1,
        }
    }
}

struct Builder<'a> {
    pcfg: &'a ParallelismConfig,
    opts: GraphOptions,
    g: Graph,
    prefix: String,
}

impl Builder<'_> {
    fn name(&self, s: &str) -> String {
        format!("{}{s}", self.prefix)
    }

    /// Adds a stage costing `II / TT` cycles per firing.
    fn stage(&mut self, name: &str, from_config: &str) -> Result<String> {
        let sp = self.pcfg.get(from_config)?;
        let ii = sp.ii()?;
        let tiles = sp.tt() as u64;
        if ii % tiles != 0 {
            return Err(Error::graph(format!("II {ii} of `{from_config}` is not a multiple of {tiles} tiles")));
        }
        Ok(self.raw_stage(name, ii / tiles, tiles))
    }

    fn raw_stage(&mut self, name: &str, cost: u64, tiles: u64) -> String {
        let n = self.name(name);
        self.g.stages.push(StageSpec {
            name: n.clone(),
            cost,
            tiles,
        });
        n
    }

    fn chan(&mut self, name: &str, from: &str, to: &str, kind: ChannelKind) {
        self.g.channels.push(ChannelSpec {
            name: self.name(name),
            from: from.into(),
            to: to.into(),
            kind,
        });
    }

    fn fifo(&mut self, name: &str, from: &str, to: &str) {
        let d = self.opts.fifo_depth;
        self.chan(name, from, to, ChannelKind::Fifo { depth: d });
    }

    fn deep_fifo(&mut self, name: &str, from: &str, to: &str) {
        let d = self.opts.deep_depth;
        self.chan(name, from, to, ChannelKind::Fifo { depth: d });
    }

    fn deep_buffer(&mut self, name: &str, from: &str, to: &str) {
        let d = self.opts.deep_depth;
        self.chan(name, from, to, ChannelKind::DeepBuffer { staging: d });
    }

    /// Attention half fed from `input`; returns the residual-add stage.
    fn attention(&mut self, input: &str) -> Result<String> {
        let ln1 = self.stage("ln1", "ln1")?;
        self.fifo("in", input, &ln1);
        let q = self.stage("q_gen", "qkv")?;
        let k = self.stage("k_gen", "qkv")?;
        let v = self.stage("v_gen", "qkv")?;
        let tiles = self.pcfg.get("qkv")?.tt() as u64;
        let vt = self.raw_stage("v_transpose", self.opts.transpose_cost, tiles);
        let qk = self.stage("qk", "qk")?;
        let sm = self.stage("softmax", "softmax")?;
        let rv = self.stage("rv", "rv")?;
        let proj = self.stage("proj", "proj")?;
        let add = self.stage("res_add1", "res_add1")?;
        self.deep_fifo("residual", &ln1, &add);
        self.fifo("ln1_q", &ln1, &q);
        self.fifo("ln1_k", &ln1, &k);
        self.fifo("ln1_v", &ln1, &v);
        self.deep_fifo("q_fifo", &q, &qk);
        self.deep_buffer("k_buffer", &k, &qk);
        self.fifo("v_t", &v, &vt);
        self.deep_buffer("v_buffer", &vt, &rv);
        self.fifo("scores", &qk, &sm);
        self.fifo("probs", &sm, &rv);
        self.fifo("attn", &rv, &proj);
        self.fifo("proj_out", &proj, &add);
        Ok(add)
    }

    /// MLP half fed from `input`; returns the closing residual-add stage.
    fn mlp(&mut self, input: &str) -> Result<String> {
        let ln2 = self.stage("ln2", "ln2")?;
        self.fifo("mid", input, &ln2);
        let mm1 = self.stage("mm1", "mm1")?;
        let gelu = self.stage("gelu", "gelu")?;
        let mm2 = self.stage("mm2", "mm2")?;
        let add = self.stage("res_add2", "res_add1")?;
        self.deep_fifo("residual2", input, &add);
        self.fifo("ln2_out", &ln2, &mm1);
        self.fifo("hidden", &mm1, &gelu);
        self.fifo("gelu_out", &gelu, &mm2);
        self.fifo("mlp_out", &mm2, &add);
        Ok(add)
    }
}

fn builder<'a>(model: &ModelConfig, pcfg: &'a ParallelismConfig, opts: GraphOptions) -> Result<Builder<'a>> {
    pcfg.validate()?;
    pcfg.require_block_stages()?;
    if let Some(s) = pcfg.stages.iter().find(|s| s.t != model.tokens) {
        return Err(Error::graph(format!("stage `{}` has T = {}, model has {} tokens", s.name, s.t, model.tokens)));
    }
    let tt = pcfg.stages[0].tt();
    if let Some(s) = pcfg.stages.iter().find(|s| s.tt() != tt) {
        return Err(Error::graph(format!("stage `{}` has TT = {}, expected {tt} on every stage", s.name, s.tt())));
    }
    if opts.source_cost == 0 || opts.transpose_cost == 0 || opts.blocks == 0 {
        return Err(Error::InvalidArgument("source/transpose cost and block count must be positive".into()));
    }
    Ok(Builder {
        pcfg,
        opts,
        g: Graph {
            stages: Vec::new(),
            channels: Vec::new(),
        },
        prefix: String::new(),
    })
}

fn source(b: &mut Builder) -> String {
    let tiles = b.pcfg.stages[0].tt() as u64;
    b.raw_stage("source", b.opts.source_cost, tiles)
}

fn sink(b: &mut Builder, from: &str) {
    let tiles = b.pcfg.stages[0].tt() as u64;
    let s = b.raw_stage("sink", 1, tiles);
    b.fifo("out", from, &s);
}

/// Attention half only: source, the four branches, residual add, sink.
pub fn build_attention_graph(model: &ModelConfig, pcfg: &ParallelismConfig, opts: GraphOptions) -> Result<Graph> {
    let mut b = builder(model, pcfg, opts)?;
    let src = source(&mut b);
    let add = b.attention(&src)?;
    sink(&mut b, &add);
    b.g.validate()?;
    Ok(b.g)
}

/// Attention and MLP halves, repeated `opts.blocks` times. With more than
/// one block every stage and channel name gets a `b{i}.` prefix.
pub fn build_block_graph(model: &ModelConfig, pcfg: &ParallelismConfig, opts: GraphOptions) -> Result<Graph> {
    let mut b = builder(model, pcfg, opts)?;
    let mut prev = source(&mut b);
    for i in 0..opts.blocks {
        if opts.blocks > 1 {
            b.prefix = format!("b{i}.");
        }
        let add1 = b.attention(&prev)?;
        prev = b.mlp(&add1)?;
    }
    b.prefix.clear();
    sink(&mut b, &prev);
    b.g.validate()?;
    Ok(b.g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_branches_from_layernorm() {
        let g = build_attention_graph(&ModelConfig::deit_tiny(), &ParallelismConfig::deit_tiny(), GraphOptions::default()).unwrap();
        assert_eq!(g.channels_from("ln1").count(), 4);
        assert_eq!(g.stage("softmax").unwrap().cost, 588);
        assert_eq!(g.stage("ln1").unwrap().tiles, 98);
        assert!(matches!(g.channel("k_buffer").unwrap().kind, ChannelKind::DeepBuffer { .. }));
    }

    #[test]
    fn per_firing_costs() {
        let g = build_block_graph(&ModelConfig::deit_tiny(), &ParallelismConfig::deit_tiny(), GraphOptions::default()).unwrap();
        let cost = |n: &str| g.stage(n).unwrap().cost;
        let got: Vec<u64> = ["ln1", "q_gen", "qk", "softmax", "rv", "proj", "res_add1", "ln2", "mm1", "gelu", "mm2"]
            .iter()
            .map(|n| cost(n))
            .collect();
        assert_eq!(got, vec![576, 512, 448, 588, 448, 512, 192, 576, 512, 384, 512]);
    }

    #[test]
    fn chained_blocks_are_prefixed() {
        let opts = GraphOptions {
            blocks: 2,
            ..GraphOptions::default()
        };
        let g = build_block_graph(&ModelConfig::deit_tiny(), &ParallelismConfig::deit_tiny(), opts).unwrap();
        assert!(g.stage("b1.softmax").is_some());
        assert!(g.channel("b1.in").is_some());
        assert_eq!(g.channel("b1.in").unwrap().from, "b0.res_add2");
    }

    #[test]
    fn missing_stage_is_an_error() {
        let mut p = ParallelismConfig::deit_tiny();
        p.stages.retain(|s| s.name != "softmax");
        assert!(build_attention_graph(&ModelConfig::deit_tiny(), &p, GraphOptions::default()).is_err());
        assert!(build_attention_graph(&ModelConfig::toy(), &ParallelismConfig::deit_tiny(), GraphOptions::default()).is_err());
    }
}
