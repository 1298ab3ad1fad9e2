//! Stages, channels and the graph description file.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub name: String,
    /// Cycles per firing; one firing produces one tile on every output.
    pub cost: u64,
    /// Firings per image.
    pub tiles: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelKind {
    Fifo {
        depth: u64,
    },
    Pipo,
    /// `staging` tiles of the next image may arrive while the current one
    /// is still held.
    DeepBuffer {
        staging: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub from: String,
    pub to: String,
    #[serde(flatten)]
    pub kind: ChannelKind,
}

/// How a stage's first firing of an image depends on its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencyMode {
    /// Fires as soon as one tile per input is available.
    Streaming,
    /// Waits for a full tensor on at least one input.
    GatherThenStream,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Graph {
    #[serde(rename = "stage")]
    pub stages: Vec<StageSpec>,
    #[serde(rename = "channel", default)]
    pub channels: Vec<ChannelSpec>,
}

/// Index form of a validated graph.
#[derive(Debug, Clone)]
pub(crate) struct Topology {
    pub inputs: Vec<Vec<usize>>,
    pub outputs: Vec<Vec<usize>>,
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    pub sources: Vec<usize>,
    pub sinks: Vec<usize>,
}

const MAX_TILES: u64 = 1 << 24;
const MAX_COST: u64 = 1 << 32;
const MAX_DEPTH: u64 = 1 << 32;

impl Graph {
    pub fn from_toml(text: &str) -> Result<Self> {
        let g: Self = toml::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("graph serializes")
    }

    pub fn stage(&self, name: &str) -> Option<&StageSpec> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn channel(&self, name: &str) -> Option<&ChannelSpec> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn channels_from<'a>(&'a self, stage: &'a str) -> impl Iterator<Item = &'a ChannelSpec> {
        self.channels.iter().filter(move |c| c.from == stage)
    }

    pub fn channels_to<'a>(&'a self, stage: &'a str) -> impl Iterator<Item = &'a ChannelSpec> {
        self.channels.iter().filter(move |c| c.to == stage)
    }

    /// Sets the depth of a FIFO channel.
    pub fn set_fifo_depth(&mut self, channel: &str, depth: u64) -> Result<()> {
        let c = self
            .channels
            .iter_mut()
            .find(|c| c.name == channel)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown channel `{channel}`")))?;
        match &mut c.kind {
            ChannelKind::Fifo { depth: d } => {
                *d = depth;
                Ok(())
            }
            _ => Err(Error::InvalidArgument(format!("channel `{channel}` is not a FIFO"))),
        }
    }

    pub fn mode(&self, stage: &str) -> DependencyMode {
        if self.channels_to(stage).any(|c| !matches!(c.kind, ChannelKind::Fifo { .. })) {
            DependencyMode::GatherThenStream
        } else {
            DependencyMode::Streaming
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.topology().map(|_| ())
    }

    pub(crate) fn topology(&self) -> Result<Topology> {
        if self.stages.is_empty() {
            return Err(Error::graph("graph has no stages"));
        }
        let mut index = HashMap::new();
        for (i, s) in self.stages.iter().enumerate() {
            if s.name.is_empty() {
                return Err(Error::graph("stage with an empty name"));
            }
            if index.insert(s.name.as_str(), i).is_some() {
                return Err(Error::graph(format!("duplicate stage `{}`", s.name)));
            }
            if !(1..=MAX_COST).contains(&s.cost) {
                return Err(Error::graph(format!("stage `{}` cost must be in 1..={MAX_COST}", s.name)));
            }
            if !(1..=MAX_TILES).contains(&s.tiles) {
                return Err(Error::graph(format!("stage `{}` tiles must be in 1..={MAX_TILES}", s.name)));
            }
        }
        let n = self.stages.len();
        let mut topo = Topology {
            inputs: vec![Vec::new(); n],
            outputs: vec![Vec::new(); n],
            from: Vec::new(),
            to: Vec::new(),
            sources: Vec::new(),
            sinks: Vec::new(),
        };
        let mut names = HashMap::new();
        for (ci, c) in self.channels.iter().enumerate() {
            if names.insert(c.name.as_str(), ci).is_some() {
                return Err(Error::graph(format!("duplicate channel `{}`", c.name)));
            }
            let lookup = |s: &str| {
                index
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::graph(format!("channel `{}` refers to unknown stage `{s}`", c.name)))
            };
            let (f, t) = (lookup(&c.from)?, lookup(&c.to)?);
            if f == t {
                return Err(Error::graph(format!("channel `{}` loops on `{}`", c.name, c.from)));
            }
            let (pt, ct) = (self.stages[f].tiles, self.stages[t].tiles);
            match c.kind {
                ChannelKind::Fifo { depth } if depth > MAX_DEPTH => {
                    return Err(Error::graph(format!("channel `{}` depth exceeds {MAX_DEPTH}", c.name)));
                }
                ChannelKind::DeepBuffer { staging } if staging > MAX_DEPTH => {
                    return Err(Error::graph(format!("channel `{}` staging exceeds {MAX_DEPTH}", c.name)));
                }
                ChannelKind::Fifo { .. } | ChannelKind::Pipo if pt != ct => {
                    return Err(Error::graph(format!(
                        "channel `{}`: producer makes {pt} tiles per image, consumer takes {ct}",
                        c.name
                    )));
                }
                _ => {}
            }
            topo.outputs[f].push(ci);
            topo.inputs[t].push(ci);
            topo.from.push(f);
            topo.to.push(t);
        }
        topo.sources = (0..n).filter(|&i| topo.inputs[i].is_empty()).collect();
        topo.sinks = (0..n).filter(|&i| topo.outputs[i].is_empty()).collect();
        // Kahn's algorithm: every stage must be reachable in topological order
        let mut indeg: Vec<usize> = topo.inputs.iter().map(|v| v.len()).collect();
        let mut queue: Vec<usize> = topo.sources.clone();
        let mut seen = 0;
        while let Some(s) = queue.pop() {
            seen += 1;
            for &c in &topo.outputs[s] {
                let t = topo.to[c];
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    queue.push(t);
                }
            }
        }
        if seen != n {
            return Err(Error::graph("graph has a cycle"));
        }
        Ok(topo)
    }
}
