//! `analyze`: resource report and roofline points.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use hgpipe_core::vit::OpCount;
use hgpipe_resource::{roofline_csv, ReportInputs, ResourceReport, ScenarioFile};

use crate::config::RunConfig;
use crate::error::Result;
use crate::{emit, write_file, CommonArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Roofline scenario file (TOML); the built-in four scenarios otherwise.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
    /// Roofline CSV path; `<out>/roofline.csv` otherwise.
    #[arg(long)]
    pub roofline_csv: Option<PathBuf>,
    /// Operations per image; counted from the model shape otherwise.
    #[arg(long)]
    pub ops_per_image: Option<f64>,
}

pub fn report(cfg: &RunConfig, args: &AnalyzeArgs) -> Result<ResourceReport> {
    let model = cfg.model_config()?;
    let pcfg = cfg.parallelism_config(&model)?;
    let scenarios = match &args.scenarios {
        Some(p) => ScenarioFile::load(p)?,
        None => ScenarioFile::reference(),
    };
    let inputs = ReportInputs {
        clock_hz: cfg.clock(),
        ops_per_image: args.ops_per_image.unwrap_or(OpCount::for_config(&model).ops() as f64),
        scenarios,
        ..ReportInputs::default()
    };
    Ok(ResourceReport::build(&pcfg, &inputs)?)
}

pub fn run(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.common.resolve(RunConfig::default())?;
    let r = report(&cfg, args)?;
    let csv = args.roofline_csv.clone().unwrap_or_else(|| cfg.out_dir().join("roofline.csv"));
    write_file(&csv, &roofline_csv(&r.roofline))?;
    match args.format {
        ReportFormat::Text => emit(out, &r.to_text()),
        ReportFormat::Json => {
            emit(out, &r.to_json())?;
            emit(out, "\n")
        }
    }
}
