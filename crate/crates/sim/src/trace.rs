//! Simulation results and timeline export.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    /// Inputs taken at the start of a firing.
    Read,
    /// Firing started.
    Compute,
    /// Outputs delivered at the end of a firing.
    Write,
    /// Stage became blocked while it still had work.
    Stall,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Read => "read",
            Action::Compute => "compute",
            Action::Write => "write",
            Action::Stall => "stall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Event {
    pub cycle: u64,
    pub stage: usize,
    pub image: u64,
    pub tile: u64,
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChannelStats {
    pub written: u64,
    pub consumed: u64,
    /// Most tiles held at once, in-flight writes included.
    pub high_water: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimSummary {
    pub images: u64,
    pub cycles: u64,
    /// Cycle the first firing of each image started at a source.
    pub image_start: Vec<u64>,
    /// Cycle the last tile of each image left the sinks.
    pub image_done: Vec<u64>,
    /// `image_done - image_start` per image.
    pub fill_latency: Vec<u64>,
    /// `image_done[k] - image_done[k - 1]` for `k >= 1`.
    pub intervals: Vec<u64>,
    /// Common interval from the third image on, when there is one.
    pub stable_ii: Option<u64>,
    /// The same measurement on each stage's own image completions.
    pub stage_stable_ii: BTreeMap<String, Option<u64>>,
    /// Every image entered before the previous one left.
    pub overlap: bool,
    pub channels: BTreeMap<String, ChannelStats>,
    pub firings: BTreeMap<String, u64>,
}

/// Images skipped before the stable II is measured.
pub const WARMUP_IMAGES: usize = 2;

pub(crate) fn stable_interval(done: &[u64]) -> Option<u64> {
    if done.len() <= WARMUP_IMAGES {
        return None;
    }
    let iv: Vec<u64> = done.windows(2).map(|w| w[1] - w[0]).skip(WARMUP_IMAGES - 1).collect();
    let first = *iv.first()?;
    iv.iter().all(|&v| v == first).then_some(first)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimTrace {
    pub stages: Vec<String>,
    pub events: Vec<Event>,
    pub summary: SimSummary,
}

impl SimTrace {
    pub fn events_of<'a>(&'a self, stage: &str) -> impl Iterator<Item = &'a Event> + 'a {
        let idx = self.stages.iter().position(|s| s == stage);
        self.events.iter().filter(move |e| Some(e.stage) == idx)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimelineFormat {
    Csv,
    Json,
}

impl std::str::FromStr for TimelineFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TimelineFormat::Csv),
            "json" => Ok(TimelineFormat::Json),
            _ => Err(Error::InvalidArgument(format!("unknown timeline format `{s}` (csv, json)"))),
        }
    }
}

#[derive(Serialize)]
struct Row<'a> {
    cycle: u64,
    stage: &'a str,
    image: u64,
    tile: u64,
    action: Action,
}

/// Writes one row per event, ordered by cycle then recording order.
///
/// CSV columns: `cycle,stage,image,tile,action`. JSON is an array of
/// objects with the same fields.
pub fn export_timeline(trace: &SimTrace, format: TimelineFormat, out: &mut impl Write) -> std::io::Result<()> {
    let mut events: Vec<&Event> = trace.events.iter().collect();
    events.sort_by_key(|e| e.cycle);
    match format {
        TimelineFormat::Csv => {
            writeln!(out, "cycle,stage,image,tile,action")?;
            for e in events {
                writeln!(out, "{},{},{},{},{}", e.cycle, trace.stages[e.stage], e.image, e.tile, e.action.as_str())?;
            }
        }
        TimelineFormat::Json => {
            let rows: Vec<Row> = events
                .iter()
                .map(|e| Row {
                    cycle: e.cycle,
                    stage: &trace.stages[e.stage],
                    image: e.image,
                    tile: e.tile,
                    action: e.action,
                })
                .collect();
            serde_json::to_writer(&mut *out, &rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}
