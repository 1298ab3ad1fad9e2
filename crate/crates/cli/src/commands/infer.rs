//! `infer`: integer forward pass on one image.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use hgpipe_core::vit::{argmax, compare, forward_float, synthetic_images, IntModel, OpCount, RunStats, SiteError, Trace};
use serde::Serialize;

use super::{calibration_images, load_images, load_weights};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::{emit, write_file, CommonArgs};

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Float weight bundle.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Calibration bundle holding an `images` tensor; synthetic images
    /// otherwise.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Synthetic calibration images when no sample bundle is given.
    #[arg(long, default_value_t = 4)]
    pub calibration_images: usize,
    /// Input bundle holding an `image` tensor.
    #[arg(long, conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,
    /// Run on a seeded synthetic image.
    #[arg(long)]
    pub synthetic: bool,
    /// Compare every site against the float reference.
    #[arg(long)]
    pub oracle: bool,
    /// Write the float weights as a bundle to this directory.
    #[arg(long)]
    pub export_weights: Option<PathBuf>,
    /// Print the operation count and stop.
    #[arg(long)]
    pub count_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    pub block: String,
    pub max_abs: f64,
    pub reference_max: f64,
    pub sites: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub sites: Vec<SiteError>,
    pub blocks: Vec<BlockError>,
    pub float_argmax: usize,
    pub argmax_agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferReport {
    pub logits: Vec<i64>,
    pub scale: f64,
    pub argmax: usize,
    pub ops_per_image: u64,
    pub stats: RunStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
}

/// Site group of a trace name: `block3.q` belongs to `block3`.
fn group(site: &str) -> &str {
    site.split('.').next().unwrap_or(site)
}

fn block_errors(sites: &[SiteError]) -> Vec<BlockError> {
    let mut by: BTreeMap<&str, BlockError> = BTreeMap::new();
    for s in sites {
        let g = group(&s.site);
        let e = by.entry(g).or_insert_with(|| BlockError {
            block: g.to_string(),
            max_abs: 0.0,
            reference_max: 0.0,
            sites: 0,
        });
        e.max_abs = e.max_abs.max(s.max_abs);
        e.reference_max = e.reference_max.max(s.reference_max);
        e.sites += 1;
    }
    by.into_values().collect()
}

fn to_text(r: &InferReport) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "ops per image: {:.3} GOP", r.ops_per_image as f64 / 1e9);
    let _ = writeln!(o, "argmax: {}", r.argmax);
    let _ = writeln!(o, "max |accumulator|: {}", r.stats.max_abs_acc);
    if let Some(orc) = &r.oracle {
        let _ = writeln!(o, "{:<10} {:>6} {:>12} {:>12}", "block", "sites", "max_abs", "ref_max");
        for b in &orc.blocks {
            let _ = writeln!(o, "{:<10} {:>6} {:>12.4e} {:>12.4e}", b.block, b.sites, b.max_abs, b.reference_max);
        }
        let _ = writeln!(o, "float argmax: {} ({})", orc.float_argmax, if orc.argmax_agrees { "agrees" } else { "differs" });
    }
    o
}

pub fn run(args: &InferArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.common.resolve(RunConfig {
        weights: args.weights.clone(),
        samples: args.samples.clone(),
        ..RunConfig::default()
    })?;
    let model_cfg = cfg.model_config()?;
    let ops = OpCount::for_config(&model_cfg).ops();
    if args.count_only {
        return emit(out, &format!("ops per image: {:.3} GOP\n", ops as f64 / 1e9));
    }
    let image = match (&args.input, args.synthetic) {
        (Some(dir), _) => {
            let mut v = load_images(dir, "image", &model_cfg)?;
            if v.len() != 1 {
                return Err(CliError::domain(format!("{} holds {} images, expected one", dir.display(), v.len())));
            }
            v.remove(0)
        }
        (None, true) => synthetic_images(&model_cfg, 1, cfg.seed().wrapping_add(1000)).remove(0),
        (None, false) => return Err(CliError::usage("infer needs --input <bundle> or --synthetic")),
    };
    let weights = load_weights(&cfg, &model_cfg)?;
    if let Some(dir) = &args.export_weights {
        weights.to_bundle()?.write(dir)?;
    }
    let images = calibration_images(&cfg, &model_cfg, cfg.samples.is_none(), args.calibration_images)?;
    let model = IntModel::calibrate(&weights, &images)?;
    let mut stats = RunStats::default();
    let mut trace = Trace::default();
    let logits = model.forward_with(&image, Some(&mut stats), args.oracle.then_some(&mut trace))?;
    let oracle = if args.oracle {
        let mut reference = Trace::default();
        let float_logits = forward_float(&weights.fake_quant(), &image, Some(&mut reference))?;
        let sites = compare(&trace, &reference);
        let float_argmax = argmax(&float_logits);
        Some(OracleReport {
            blocks: block_errors(&sites),
            sites,
            float_argmax,
            argmax_agrees: float_argmax == logits.argmax(),
        })
    } else {
        None
    };
    let report = InferReport {
        argmax: logits.argmax(),
        logits: logits.values,
        scale: logits.scale,
        ops_per_image: ops,
        stats,
        oracle,
    };
    let path = cfg.out_dir().join("logits.json");
    write_file(&path, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    emit(out, &to_text(&report))?;
    emit(out, &format!("wrote {}\n", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_sites_by_block() {
        let e = |site: &str, m: f64| SiteError {
            site: site.into(),
            max_abs: m,
            mean_abs: m / 2.0,
            reference_max: 1.0,
        };
        let b = block_errors(&[e("block0.q", 0.1), e("block0.k", 0.3), e("block1.q", 0.2), e("logits", 0.5)]);
        assert_eq!(b.len(), 3);
        assert_eq!((b[0].block.as_str(), b[0].max_abs, b[0].sites), ("block0", 0.3, 2));
        assert_eq!(b[2].block, "logits");
    }
}
