//! Command-line front end over the integer model, the cost model and the
//! pipeline simulator.
//!
//! Exit codes: 0 success, 1 usage, 2 domain error (deadlock, shape,
//! invalid config), 3 I/O.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hgpipe_core::vit::BitRegime;

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, Result};

/// Environment variable holding the log filter (`error`, `warn`, `info`,
/// `debug`, `trace`).
pub const LOG_ENV: &str = "HGPIPE_LOG";

#[derive(Debug, Parser)]
#[command(name = "hgpipe", version, about = "Pipelined ViT accelerator model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and calibrate every lookup table, with dumps and error metrics.
    Tables(commands::tables::TablesArgs),
    /// Integer inference on one image, optionally against the float oracle.
    Infer(commands::infer::InferArgs),
    /// Tile-level pipeline simulation.
    Simulate(commands::simulate::SimulateArgs),
    /// Initiation interval, buffer, DSP and roofline report.
    Analyze(commands::analyze::AnalyzeArgs),
}

/// Flags shared by every command; each overrides the run config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Run config file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model preset: deit-tiny, deit-small or toy.
    #[arg(long)]
    pub preset: Option<String>,
    /// Model shape file (TOML), instead of a preset.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Bit regime: a4w4, a3w3 or a8w8.
    #[arg(long)]
    pub bits: Option<BitRegime>,
    /// Parallelism file (TOML).
    #[arg(long)]
    pub parallelism: Option<PathBuf>,
    /// Clock frequency in Hz [default: 425e6].
    #[arg(long)]
    pub clock_hz: Option<f64>,
    /// Seed for synthetic weights and images [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    /// Config file (if any) with these flags and `extra` layered on top.
    pub fn resolve(&self, extra: RunConfig) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            preset: self.preset.clone(),
            model: self.model.clone(),
            bits: self.bits,
            parallelism: self.parallelism.clone(),
            clock_hz: self.clock_hz,
            out: self.out.clone(),
            seed: self.seed,
            ..extra
        };
        if flags.preset.is_some() && flags.model.is_some() {
            return Err(CliError::usage("--preset and --model are mutually exclusive"));
        }
        let merged = file.merge(flags);
        merged.validate()?;
        Ok(merged)
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Tables(a) => commands::tables::run(&a, out),
        Command::Infer(a) => commands::infer::run(&a, out),
        Command::Simulate(a) => commands::simulate::run(&a, out),
        Command::Analyze(a) => commands::analyze::run(&a, out),
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub(crate) fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}
