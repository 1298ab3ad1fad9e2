//! `simulate`: run the tile-level pipeline model.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use hgpipe_sim::error::BlockedStage;
use hgpipe_sim::{
    build_block_graph, export_timeline, min_fifo_depth_parallel, simulate, Error as SimError, Graph, GraphOptions,
    SimOptions, SimSummary, TimelineFormat,
};
use log::info;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::{emit, write_file, CommonArgs};

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Graph file (TOML) instead of the generated block graph.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Images pushed through the pipeline.
    #[arg(long, default_value_t = 5)]
    pub images: u64,
    /// Blocks in the generated graph.
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    /// Override a FIFO depth, `CHANNEL=N`; repeatable.
    #[arg(long = "fifo-depth", value_name = "CHANNEL=N")]
    pub fifo_depth: Vec<String>,
    /// Search the shallowest deadlock-free depth of this FIFO.
    #[arg(long, value_name = "CHANNEL")]
    pub min_depth: Option<String>,
    /// Upper bound of the depth search.
    #[arg(long, default_value_t = 1024)]
    pub max_depth: u64,
    /// Parallel probes of the depth search.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Last cycle any firing may complete at.
    #[arg(long)]
    pub horizon: Option<u64>,
    /// Per-event timeline file.
    #[arg(long)]
    pub timeline: Option<PathBuf>,
    /// Timeline format: csv or json.
    #[arg(long, default_value = "csv")]
    pub timeline_format: TimelineFormat,
    /// Also write the summary JSON to this file.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeadlockInfo {
    pub cycle: u64,
    pub blocked: Vec<BlockedStage>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinDepth {
    pub channel: String,
    pub depth: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    /// `ok` or `deadlock`.
    pub status: &'static str,
    pub stable_ii: Option<u64>,
    pub fill_latency: Option<u64>,
    pub deadlock: Option<DeadlockInfo>,
    pub min_depth: Option<MinDepth>,
    pub summary: Option<SimSummary>,
}

/// `CHANNEL=N`.
pub fn parse_depth(s: &str) -> Result<(String, u64)> {
    let (name, n) = s
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("--fifo-depth expects CHANNEL=N, got `{s}`")))?;
    let n = n
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("--fifo-depth: `{n}` is not a depth")))?;
    if name.trim().is_empty() {
        return Err(CliError::usage("--fifo-depth: empty channel name"));
    }
    Ok((name.trim().to_string(), n))
}

fn graph(cfg: &RunConfig, args: &SimulateArgs) -> Result<Graph> {
    let mut g = match &args.graph {
        Some(path) => Graph::load(path)?,
        None => {
            let model = cfg.model_config()?;
            let pcfg = cfg.parallelism_config(&model)?;
            let opts = GraphOptions {
                blocks: args.blocks,
                ..GraphOptions::default()
            };
            build_block_graph(&model, &pcfg, opts)?
        }
    };
    for d in &args.fifo_depth {
        let (name, depth) = parse_depth(d)?;
        g.set_fifo_depth(&name, depth).map_err(|e| CliError::usage(e.to_string()))?;
    }
    Ok(g)
}

pub fn run(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.common.resolve(RunConfig::default())?;
    let g = graph(&cfg, args)?;
    let mut opts = SimOptions {
        images: args.images,
        record_events: args.timeline.is_some(),
        ..SimOptions::default()
    };
    if let Some(h) = args.horizon {
        opts.horizon = h;
    }
    let min_depth = match &args.min_depth {
        Some(ch) => {
            let depth = min_fifo_depth_parallel(&g, ch, 0, args.max_depth, &opts, args.jobs)?;
            info!("shallowest deadlock-free depth of `{ch}`: {depth}");
            Some(MinDepth {
                channel: ch.clone(),
                depth,
            })
        }
        None => None,
    };
    let result = simulate(&g, &opts);
    let (report, failure) = match result {
        Ok(trace) => {
            if let Some(path) = &args.timeline {
                let f = File::create(path).map_err(|e| CliError::io(path, e))?;
                let mut w = BufWriter::new(f);
                export_timeline(&trace, args.timeline_format, &mut w)
                    .and_then(|_| w.flush())
                    .map_err(|e| CliError::io(path, e))?;
            }
            let s = trace.summary;
            (
                SimulateReport {
                    status: "ok",
                    stable_ii: s.stable_ii,
                    fill_latency: s.fill_latency.first().copied(),
                    deadlock: None,
                    min_depth,
                    summary: Some(s),
                },
                None,
            )
        }
        Err(SimError::Deadlock { cycle, blocked }) => {
            let names: Vec<&str> = blocked.iter().map(|b| b.stage.as_str()).collect();
            let msg = format!("deadlock at cycle {cycle}; blocked stages: {}", names.join(", "));
            (
                SimulateReport {
                    status: "deadlock",
                    stable_ii: None,
                    fill_latency: None,
                    deadlock: Some(DeadlockInfo { cycle, blocked }),
                    min_depth,
                    summary: None,
                },
                Some(CliError::domain(msg)),
            )
        }
        Err(e) => return Err(e.into()),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(path) = &args.summary {
        write_file(path, &json)?;
    }
    emit(out, &json)?;
    emit(out, "\n")?;
    failure.map_or(Ok(()), Err)
}
