//! Deterministic tile-level simulation of a pipelined accelerator.
//!
//! Stages fire once per tile, each firing costing a fixed number of
//! cycles, and are connected by bounded channels:
//!
//! * FIFO: tiles stream through a queue of fixed depth.
//! * PIPO: two full-tensor banks; the consumer reads a bank only once the
//!   producer has filled it.
//! * DeepBuffer: one full tensor held and replayed to the consumer until
//!   its last firing of the image, with a staging area for the next image.
//!
//! A stage fires when every input can supply a tile and every output can
//! accept one. When nothing is running and work remains, the simulation
//! reports a deadlock with the blocked stages.

pub mod depth;
pub mod engine;
pub mod error;
pub mod graph;
pub mod model;
pub mod trace;

pub use depth::{min_fifo_depth, min_fifo_depth_parallel};
pub use engine::{simulate, SimOptions, MAX_IMAGES};
pub use error::{BlockedStage, Error, Result};
pub use graph::{ChannelKind, ChannelSpec, DependencyMode, Graph, StageSpec};
pub use model::{build_attention_graph, build_block_graph, GraphOptions};
pub use trace::{export_timeline, Action, Event, SimSummary, SimTrace, TimelineFormat};
