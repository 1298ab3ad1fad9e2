//! Closed-form cost and performance model of the pipelined accelerator.
//!
//! * [`parallelism`] describes per-stage tiling and loads it from TOML.
//! * [`cost`] computes initiation intervals, BRAM counts and efficiency,
//!   and buffer costs.
//! * [`dsp`] estimates the DSP cost of non-linear operators built from
//!   arithmetic units instead of tables.
//! * [`roofline`] evaluates roofline scenarios.
//! * [`balance`] reports pipeline bubbles and ideal throughput.
//! * [`report`] assembles everything into a JSON / text report.

pub mod balance;
pub mod cost;
pub mod dsp;
pub mod error;
pub mod parallelism;
pub mod published;
pub mod report;
pub mod roofline;

pub use balance::{balance_report, throughput, BalanceReport, StageBalance, Throughput};
pub use cost::{
    accelerator_ii, bram_count_and_efficiency, buffer_cost, residual_buffer_comparison, stage_ii, tensor_brams, BramSpec,
    BramUsage, BufferComparison, BufferKind,
};
pub use dsp::{naive_dsp_estimate, CostTable, DspBreakdown, DspItem};
pub use error::{Error, Result};
pub use parallelism::{ParallelismConfig, StageKind, StageParallelism};
pub use report::{ReportInputs, ResourceReport};
pub use roofline::{roofline, roofline_csv, RooflinePoint, RooflineScenario, ScenarioFile};
