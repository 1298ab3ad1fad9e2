//! Event loop.

use std::collections::BTreeMap;

use crate::graph::{ChannelKind, Graph, Topology};
use crate::trace::{stable_interval, Action, ChannelStats, Event, SimSummary, SimTrace};
use crate::{BlockedStage, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub images: u64,
    /// Last cycle any firing may complete at.
    pub horizon: u64,
    /// Keep the per-event timeline; summaries are always produced.
    pub record_events: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            images: 5,
            horizon: 1 << 40,
            record_events: true,
        }
    }
}

struct Channel {
    kind: ChannelKind,
    /// Producer tiles per image.
    p: u64,
    /// Consumer firings per image.
    consumer_tiles: u64,
    capacity: u64,
    written: u64,
    reserved: u64,
    freed: u64,
    /// Consumer firings that took a tile (FIFO and PIPO).
    popped: u64,
    high_water: u64,
}

impl Channel {
    fn new(kind: ChannelKind, p: u64, consumer_tiles: u64) -> Self {
        let capacity = match kind {
            ChannelKind::Fifo { depth } => depth,
            ChannelKind::Pipo => 2 * p,
            ChannelKind::DeepBuffer { staging } => p + staging,
        };
        Self {
            kind,
            p,
            consumer_tiles,
            capacity,
            written: 0,
            reserved: 0,
            freed: 0,
            popped: 0,
            high_water: 0,
        }
    }

    fn held(&self) -> u64 {
        self.written + self.reserved - self.freed
    }

    fn can_accept(&self) -> bool {
        self.held() < self.capacity
    }

    /// Whether consumer firing `g` (global index) can start.
    fn can_supply(&self, g: u64) -> bool {
        match self.kind {
            ChannelKind::Fifo { .. } => self.written > g,
            ChannelKind::Pipo => self.written >= (g / self.p + 1) * self.p,
            ChannelKind::DeepBuffer { .. } => self.written >= (g / self.consumer_tiles + 1) * self.p,
        }
    }

    fn reserve(&mut self) {
        self.reserved += 1;
    }

    fn on_consumer_start(&mut self) {
        match self.kind {
            ChannelKind::Fifo { .. } => {
                self.popped += 1;
                self.freed += 1;
            }
            ChannelKind::Pipo => {
                self.popped += 1;
                // a bank frees once fully drained
                self.freed = self.popped / self.p * self.p;
            }
            ChannelKind::DeepBuffer { .. } => {}
        }
    }

    fn on_consumer_end(&mut self, g: u64) {
        if let ChannelKind::DeepBuffer { .. } = self.kind {
            if (g + 1) % self.consumer_tiles == 0 {
                self.freed += self.p;
                self.popped += self.consumer_tiles;
            }
        }
    }
}

struct Stage {
    cost: u64,
    tiles: u64,
    total: u64,
    next: u64,
    busy: Option<(u64, u64)>,
    stalled: bool,
    image_done: Vec<u64>,
}

struct Sim<'a> {
    topo: Topology,
    stages: Vec<Stage>,
    channels: Vec<Channel>,
    events: Vec<Event>,
    record: bool,
    image_start: Vec<Option<u64>>,
    graph: &'a Graph,
}

impl Sim<'_> {
    fn blocked_on(&self, s: usize) -> (Vec<usize>, Vec<usize>) {
        let g = self.stages[s].next;
        let starved = self.topo.inputs[s].iter().copied().filter(|&c| !self.channels[c].can_supply(g)).collect();
        let full = self.topo.outputs[s].iter().copied().filter(|&c| !self.channels[c].can_accept()).collect();
        (starved, full)
    }

    fn ready(&self, s: usize) -> bool {
        let st = &self.stages[s];
        if st.busy.is_some() || st.next >= st.total {
            return false;
        }
        self.topo.inputs[s].iter().all(|&c| self.channels[c].can_supply(st.next))
            && self.topo.outputs[s].iter().all(|&c| self.channels[c].can_accept())
    }

    fn push(&mut self, cycle: u64, stage: usize, g: u64, action: Action) {
        if self.record {
            let tiles = self.stages[stage].tiles;
            self.events.push(Event {
                cycle,
                stage,
                image: g / tiles,
                tile: g % tiles,
                action,
            });
        }
    }

    fn start(&mut self, s: usize, now: u64) {
        let g = self.stages[s].next;
        for i in 0..self.topo.inputs[s].len() {
            let c = self.topo.inputs[s][i];
            self.channels[c].on_consumer_start();
        }
        for i in 0..self.topo.outputs[s].len() {
            let c = self.topo.outputs[s][i];
            self.channels[c].reserve();
        }
        let st = &mut self.stages[s];
        st.busy = Some((now + st.cost, g));
        st.next += 1;
        st.stalled = false;
        let image = (g / st.tiles) as usize;
        if self.topo.inputs[s].is_empty() && g % st.tiles == 0 && self.image_start[image].is_none() {
            self.image_start[image] = Some(now);
        }
        if !self.topo.inputs[s].is_empty() {
            self.push(now, s, g, Action::Read);
        }
        self.push(now, s, g, Action::Compute);
    }

    fn finish(&mut self, s: usize, now: u64, g: u64) {
        for i in 0..self.topo.outputs[s].len() {
            let c = self.topo.outputs[s][i];
            let ch = &mut self.channels[c];
            ch.reserved -= 1;
            ch.written += 1;
        }
        for i in 0..self.topo.inputs[s].len() {
            let c = self.topo.inputs[s][i];
            self.channels[c].on_consumer_end(g);
        }
        let st = &mut self.stages[s];
        st.busy = None;
        if (g + 1) % st.tiles == 0 {
            st.image_done.push(now);
        }
        self.push(now, s, g, Action::Write);
    }
}

/// Largest accepted `SimOptions::images`.
pub const MAX_IMAGES: u64 = 1 << 20;

/// Runs `opts.images` images through `graph`.
///
/// Each loop iteration completes every firing due at the current cycle,
/// then starts stages until no more can start. Starting a stage only frees
/// input space and reserves its own outputs, so the set of stages started
/// in a cycle does not depend on the order they are tried in.
pub fn simulate(graph: &Graph, opts: &SimOptions) -> Result<SimTrace> {
    let topo = graph.topology()?;
    if opts.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    if opts.images > MAX_IMAGES {
        return Err(Error::InvalidArgument(format!("at most {MAX_IMAGES} images per run")));
    }
    let n = graph.stages.len();
    let images = opts.images;
    let stages: Vec<Stage> = graph
        .stages
        .iter()
        .map(|s| Stage {
            cost: s.cost,
            tiles: s.tiles,
            total: s.tiles.checked_mul(images).unwrap_or(u64::MAX),
            next: 0,
            busy: None,
            stalled: false,
            image_done: Vec::new(),
        })
        .collect();
    let channels: Vec<Channel> = graph
        .channels
        .iter()
        .enumerate()
        .map(|(i, c)| Channel::new(c.kind, graph.stages[topo.from[i]].tiles, graph.stages[topo.to[i]].tiles))
        .collect();
    let mut sim = Sim {
        topo,
        stages,
        channels,
        events: Vec::new(),
        record: opts.record_events,
        image_start: vec![None; images as usize],
        graph,
    };
    let mut now = 0u64;
    loop {
        for s in 0..n {
            if let Some((t, g)) = sim.stages[s].busy {
                if t == now {
                    sim.finish(s, now, g);
                }
            }
        }
        loop {
            let mut started = false;
            for s in 0..n {
                if sim.ready(s) {
                    sim.start(s, now);
                    started = true;
                }
            }
            if !started {
                break;
            }
        }
        // sampled once the cycle settles so start order cannot matter
        for ch in &mut sim.channels {
            ch.high_water = ch.high_water.max(ch.held());
        }
        for s in 0..n {
            let st = &sim.stages[s];
            if st.busy.is_none() && st.next < st.total && !st.stalled {
                let g = st.next;
                sim.stages[s].stalled = true;
                sim.push(now, s, g, Action::Stall);
            }
        }
        match sim.stages.iter().filter_map(|s| s.busy.map(|b| b.0)).min() {
            Some(t) if t > opts.horizon => {
                let images_done = sim.topo.sinks.iter().map(|&s| sim.stages[s].image_done.len()).min().unwrap_or(0);
                return Err(Error::HorizonExceeded {
                    horizon: opts.horizon,
                    images_done,
                });
            }
            Some(t) => now = t,
            None => break,
        }
    }
    if sim.stages.iter().any(|s| s.next < s.total) {
        let blocked = (0..n)
            .filter(|&s| sim.stages[s].next < sim.stages[s].total)
            .map(|s| {
                let (starved, full) = sim.blocked_on(s);
                BlockedStage {
                    stage: graph.stages[s].name.clone(),
                    starved_on: starved.iter().map(|&c| graph.channels[c].name.clone()).collect(),
                    full: full.iter().map(|&c| graph.channels[c].name.clone()).collect(),
                }
            })
            .collect();
        return Err(Error::Deadlock { cycle: now, blocked });
    }
    Ok(finish_trace(sim, now, images))
}

fn finish_trace(sim: Sim, now: u64, images: u64) -> SimTrace {
    let g = sim.graph;
    let image_done: Vec<u64> = (0..images as usize)
        .map(|i| sim.topo.sinks.iter().map(|&s| sim.stages[s].image_done[i]).max().unwrap_or(0))
        .collect();
    let image_start: Vec<u64> = sim.image_start.iter().map(|v| v.unwrap_or(0)).collect();
    let fill_latency = image_done.iter().zip(&image_start).map(|(d, s)| d - s).collect();
    let intervals = image_done.windows(2).map(|w| w[1] - w[0]).collect();
    let overlap = images >= 2 && (1..images as usize).all(|k| image_start[k] < image_done[k - 1]);
    let stage_stable_ii = g
        .stages
        .iter()
        .zip(&sim.stages)
        .map(|(spec, st)| (spec.name.clone(), stable_interval(&st.image_done)))
        .collect();
    let channels = g
        .channels
        .iter()
        .zip(&sim.channels)
        .map(|(spec, ch)| {
            (
                spec.name.clone(),
                ChannelStats {
                    written: ch.written,
                    consumed: ch.popped,
                    high_water: ch.high_water,
                },
            )
        })
        .collect();
    let firings: BTreeMap<String, u64> = g.stages.iter().zip(&sim.stages).map(|(spec, st)| (spec.name.clone(), st.next)).collect();
    SimTrace {
        stages: g.stages.iter().map(|s| s.name.clone()).collect(),
        summary: SimSummary {
            images,
            cycles: now,
            stable_ii: stable_interval(&image_done),
            image_start,
            image_done,
            fill_latency,
            intervals,
            stage_stable_ii,
            overlap,
            channels,
            firings,
        },
        events: sim.events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ChannelSpec, StageSpec};

    fn stage(name: &str, cost: u64, tiles: u64) -> StageSpec {
        StageSpec {
            name: name.into(),
            cost,
            tiles,
        }
    }

    fn chan(name: &str, from: &str, to: &str, kind: ChannelKind) -> ChannelSpec {
        ChannelSpec {
            name: name.into(),
            from: from.into(),
            to: to.into(),
            kind,
        }
    }

    fn chain(costs: &[u64], tiles: u64, kind: ChannelKind) -> Graph {
        let names: Vec<String> = (0..costs.len()).map(|i| format!("s{i}")).collect();
        Graph {
            stages: names.iter().zip(costs).map(|(n, &c)| stage(n, c, tiles)).collect(),
            channels: names.windows(2).map(|w| chan(&format!("{}{}", w[0], w[1]), &w[0], &w[1], kind)).collect(),
        }
    }

    fn opts(images: u64) -> SimOptions {
        SimOptions {
            images,
            ..SimOptions::default()
        }
    }

    #[test]
    fn balanced_chain() {
        let g = chain(&[10, 10], 1, ChannelKind::Fifo { depth: 1 << 20 });
        let t = simulate(&g, &opts(6)).unwrap();
        assert_eq!(t.summary.stable_ii, Some(10));
    }

    #[test]
    fn slow_stage_sets_ii() {
        let g = chain(&[10, 20], 1, ChannelKind::Fifo { depth: 1 << 20 });
        let t = simulate(&g, &opts(6)).unwrap();
        assert_eq!(t.summary.stable_ii, Some(20));
        assert_eq!(t.summary.stage_stable_ii["s1"], Some(20));
    }

    #[test]
    fn pipo_delays_consumer_by_a_tensor() {
        let g = chain(&[1, 1], 4, ChannelKind::Pipo);
        let t = simulate(&g, &opts(3)).unwrap();
        // consumer starts only after the 4th producer tile lands at cycle 4
        let first = t.events_of("s1").find(|e| e.action == Action::Compute).unwrap();
        assert_eq!(first.cycle, 4);
        // the second bank fills while the first drains
        let hw = t.summary.channels["s0s1"].high_water;
        assert!(hw > 4 && hw <= 8, "{hw}");
    }

    #[test]
    fn deep_buffer_replays_until_last_firing() {
        let mut g = chain(&[1, 3], 2, ChannelKind::DeepBuffer { staging: 2 });
        g.stages[1].tiles = 5;
        let t = simulate(&g, &opts(3)).unwrap();
        // each image: 2 tiles in, 5 consumer firings of 3 cycles
        assert_eq!(t.summary.stable_ii, Some(15));
        // without staging the refill is serialized with the replay
        let mut g0 = g.clone();
        g0.channels[0].kind = ChannelKind::DeepBuffer { staging: 0 };
        assert_eq!(simulate(&g0, &opts(4)).unwrap().summary.stable_ii, Some(17));
        assert_eq!(t.summary.channels["s0s1"].written, 6);
        assert_eq!(t.summary.channels["s0s1"].consumed, 15);
    }

    #[test]
    fn zero_depth_fifo_deadlocks() {
        let g = chain(&[1, 1], 2, ChannelKind::Fifo { depth: 0 });
        match simulate(&g, &opts(1)) {
            Err(Error::Deadlock { cycle, blocked }) => {
                assert_eq!(cycle, 0);
                assert_eq!(blocked.len(), 2);
                assert_eq!(blocked[0].full, vec!["s0s1".to_string()]);
                assert_eq!(blocked[1].starved_on, vec!["s0s1".to_string()]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn horizon() {
        let g = chain(&[10, 10], 4, ChannelKind::Fifo { depth: 2 });
        let o = SimOptions {
            images: 2,
            horizon: 50,
            record_events: false,
        };
        assert!(matches!(simulate(&g, &o), Err(Error::HorizonExceeded { horizon: 50, .. })));
    }

    #[test]
    fn image_cap() {
        let g = chain(&[1], 1, ChannelKind::Fifo { depth: 1 });
        assert!(simulate(&g, &opts(MAX_IMAGES + 1)).is_err());
    }

    #[test]
    fn zero_images_is_empty() {
        let g = chain(&[3, 3], 2, ChannelKind::Fifo { depth: 2 });
        let t = simulate(&g, &opts(0)).unwrap();
        assert!(t.events.is_empty());
        assert_eq!(t.summary.cycles, 0);
    }

    #[test]
    fn events_are_cycle_monotone_per_stage() {
        let g = chain(&[3, 5, 2], 4, ChannelKind::Fifo { depth: 2 });
        let t = simulate(&g, &opts(4)).unwrap();
        for s in &t.stages {
            let c: Vec<u64> = t.events_of(s).map(|e| e.cycle).collect();
            assert!(c.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
