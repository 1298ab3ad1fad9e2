//! `tables`: calibrate the integer model and dump every lookup table.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use hgpipe_core::lut::{build_recip_table, LutTable, SegmentedLutTable};
use hgpipe_core::vit::model::TableCalibration;
use hgpipe_core::vit::{IntModel, TableKind};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{calibration_images, load_weights};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::{emit, write_file, CommonArgs};

/// Inputs visited per table for the error metrics.
const ERROR_SAMPLES: usize = 20_000;
/// Log-uniform denominators for the Recip comparison.
const RECIP_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, Args)]
pub struct TablesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Calibration bundle holding an `images` tensor.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Calibrate on synthetic images instead of a sample bundle.
    #[arg(long)]
    pub synthetic: bool,
    /// Synthetic calibration images.
    #[arg(long, default_value_t = 4)]
    pub images: usize,
    /// Build tables on the raw sample min/max range.
    #[arg(long)]
    pub no_calibration: bool,
    /// Float weight bundle.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Threads for the per-table error metrics.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub name: String,
    pub kind: &'static str,
    pub alpha: i64,
    pub beta: i64,
    pub entries: usize,
    pub repeated: usize,
    pub max_abs_error: f64,
    pub mse: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecipComparison {
    pub samples: usize,
    pub low: i64,
    pub high: i64,
    pub single_entries: usize,
    pub segmented_entries: usize,
    pub single_mse: f64,
    pub segmented_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TablesReport {
    pub joint_calibration: bool,
    pub act_bits: u32,
    pub families: Vec<&'static str>,
    pub tables: Vec<TableRow>,
    pub calibration: Vec<TableCalibration>,
    /// Repeated entries summed over the range-calibrated tables.
    pub calibrated_repeated: usize,
    pub recip: RecipComparison,
}

fn table_row(name: &str, kind: &TableKind, t: &LutTable, file: String) -> TableRow {
    let stats = t.error_against(kind.reference(), t.domain_inputs(ERROR_SAMPLES));
    TableRow {
        name: name.to_string(),
        kind: kind.name(),
        alpha: t.alpha(),
        beta: t.beta(),
        entries: t.depth(),
        repeated: t.repeated_entries(),
        max_abs_error: stats.max_abs,
        mse: stats.mse(),
        file,
    }
}

/// MSE of the segmented Recip against one table of the same depth as a
/// segment, over log-uniform denominators from the row-maximum term up.
pub fn recip_comparison(exp: &LutTable, recip: &SegmentedLutTable, seed: u64) -> Result<RecipComparison> {
    let in_scale = exp.out_scale();
    let (lo, hi) = (exp.entries()[0].max(1) as i64, recip.beta());
    if hi <= lo {
        return Err(CliError::domain("Recip range is empty"));
    }
    let single = build_recip_table(1, hi, recip.low().addr_bits(), recip.low().out_bits(), in_scale)?;
    let f = |x: i64| 1.0 / (x as f64 * in_scale);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut a, mut b) = (0.0, 0.0);
    for _ in 0..RECIP_SAMPLES {
        let x = rng.gen_range((lo as f64).ln()..(hi as f64).ln()).exp().round() as i64;
        a += (recip.eval(x) - f(x)).powi(2);
        b += (single.eval(x) - f(x)).powi(2);
    }
    Ok(RecipComparison {
        samples: RECIP_SAMPLES,
        low: lo,
        high: hi,
        single_entries: single.depth(),
        segmented_entries: recip.total_entries(),
        single_mse: b / RECIP_SAMPLES as f64,
        segmented_mse: a / RECIP_SAMPLES as f64,
    })
}

/// Calibrates the model and collects the report; dumps go to `dir`.
pub fn build(cfg: &RunConfig, args: &TablesArgs, dir: &std::path::Path) -> Result<(IntModel, TablesReport)> {
    let mut model_cfg = cfg.model_config()?;
    model_cfg.tables.joint_calibration = !args.no_calibration;
    let weights = load_weights(cfg, &model_cfg)?;
    let images = calibration_images(cfg, &model_cfg, args.synthetic, args.images)?;
    info!("calibrating on {} images", images.len());
    let model = IntModel::calibrate(&weights, &images)?;

    let tables = model.tables();
    let jobs = args.jobs.max(1).min(tables.len());
    let chunk = tables.len().div_ceil(jobs);
    let rows: Vec<TableRow> = std::thread::scope(|s| {
        let handles: Vec<_> = tables
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|(name, kind, t)| table_row(name, kind, t, format!("{name}.lut")))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("table thread panicked")).collect()
    });
    for (name, _, t) in &tables {
        write_file(&dir.join(format!("{name}.lut")), &t.dump())?;
    }
    for (bi, b) in model.blocks.iter().enumerate() {
        write_file(&dir.join(format!("block{bi}.softmax.recip.seg")), &b.recip.dump())?;
    }
    let first = model.blocks.first().ok_or_else(|| CliError::domain("model has no blocks"))?;
    let recip = recip_comparison(&first.exp, &first.recip, cfg.seed())?;
    let mut families: Vec<&'static str> = rows.iter().map(|r| r.kind).collect();
    families.sort_unstable();
    families.dedup();
    let report = TablesReport {
        joint_calibration: model_cfg.tables.joint_calibration,
        act_bits: model_cfg.act_bits,
        families,
        tables: rows,
        calibrated_repeated: model.calibration.iter().map(|c| c.repeated).sum(),
        calibration: model.calibration.clone(),
        recip,
    };
    Ok((model, report))
}

pub fn to_text(r: &TablesReport) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "{:<28} {:<8} {:>10} {:>10} {:>4} {:>12} {:>12}", "table", "kind", "alpha", "beta", "rep", "max_abs", "mse");
    for t in &r.tables {
        let _ = writeln!(
            o,
            "{:<28} {:<8} {:>10} {:>10} {:>4} {:>12.4e} {:>12.4e}",
            t.name, t.kind, t.alpha, t.beta, t.repeated, t.max_abs_error, t.mse
        );
    }
    let _ = writeln!(o, "families: {}", r.families.join(", "));
    let _ = writeln!(
        o,
        "range calibration: {} ({} repeated entries in calibrated tables)",
        if r.joint_calibration { "on" } else { "off" },
        r.calibrated_repeated
    );
    let c = &r.recip;
    let _ = writeln!(
        o,
        "recip mse over [{}, {}]: single {} entries {:.4e}, segmented {} entries {:.4e}",
        c.low, c.high, c.single_entries, c.single_mse, c.segmented_entries, c.segmented_mse
    );
    o
}

pub fn run(args: &TablesArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.common.resolve(RunConfig {
        weights: args.weights.clone(),
        samples: args.samples.clone(),
        ..RunConfig::default()
    })?;
    let dir = cfg.out_dir().join("tables");
    let (_, report) = build(&cfg, args, &dir)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&dir.join("report.json"), &json)?;
    emit(out, &to_text(&report))?;
    emit(out, &format!("wrote {}\n", dir.display()))
}
