//! Depth monotonicity on random branch-join graphs, and graph files.

use hgpipe_sim::depth::completes_at;
use hgpipe_sim::{
    min_fifo_depth, min_fifo_depth_parallel, simulate, ChannelKind, ChannelSpec, Graph, SimOptions, StageSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A source fans out to a short FIFO bypass and a chain of stages, one of
/// which may gather a whole image; both meet at a join.
fn random_graph(rng: &mut ChaCha8Rng) -> Graph {
    let tiles = rng.gen_range(2..=12);
    let chain_len = rng.gen_range(1..=4);
    let st = |name: String, cost| StageSpec { name, cost, tiles };
    let ch = |name: &str, from: &str, to: &str, kind| ChannelSpec {
        name: name.into(),
        from: from.into(),
        to: to.into(),
        kind,
    };
    let mut stages = vec![st("src".into(), rng.gen_range(1..=5)), st("join".into(), rng.gen_range(1..=5))];
    let mut channels = vec![ch("bypass", "src", "join", ChannelKind::Fifo { depth: 1 })];
    let mut prev = "src".to_string();
    let gather = rng.gen_range(0..=chain_len);
    for i in 0..chain_len {
        let name = format!("c{i}");
        stages.push(st(name.clone(), rng.gen_range(1..=8)));
        let kind = match (i == gather, rng.gen_bool(0.5)) {
            (true, true) => ChannelKind::DeepBuffer {
                staging: rng.gen_range(0..=tiles),
            },
            (true, false) => ChannelKind::Pipo,
            _ => ChannelKind::Fifo {
                depth: rng.gen_range(1..=3),
            },
        };
        channels.push(ch(&format!("{prev}_{name}"), &prev, &name, kind));
        prev = name;
    }
    channels.push(ch("tail", &prev, "join", ChannelKind::Fifo { depth: 2 }));
    Graph { stages, channels }
}

#[test]
fn completion_and_ii_are_monotone_in_depth() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let o = SimOptions {
        images: 4,
        record_events: false,
        ..SimOptions::default()
    };
    for case in 0..50 {
        let g = random_graph(&mut rng);
        let mut prev_ok = false;
        let mut prev_ii: Option<u64> = None;
        for depth in 0..=40 {
            let mut h = g.clone();
            h.set_fifo_depth("bypass", depth).unwrap();
            match simulate(&h, &o) {
                Ok(t) => {
                    let ii = t.summary.intervals.last().copied();
                    if let (Some(p), Some(c)) = (prev_ii, ii) {
                        assert!(c <= p, "case {case} depth {depth}: interval {c} after {p}");
                    }
                    prev_ok = true;
                    prev_ii = ii;
                }
                Err(hgpipe_sim::Error::Deadlock { .. }) => {
                    assert!(!prev_ok, "case {case}: deadlock at {depth} after completing shallower");
                }
                Err(e) => panic!("case {case}: {e}"),
            }
        }
        assert!(prev_ok, "case {case}: deadlocks at depth 40");
        let d = min_fifo_depth(&g, "bypass", 0, 40, &o).unwrap();
        assert_eq!(min_fifo_depth_parallel(&g, "bypass", 0, 40, &o, 3).unwrap(), d);
        assert!(completes_at(&g, "bypass", d, &o).unwrap());
        if d > 0 {
            assert!(!completes_at(&g, "bypass", d - 1, &o).unwrap());
        }
    }
}

#[test]
fn graph_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = random_graph(&mut rng);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.toml");
    std::fs::write(&path, g.to_toml()).unwrap();
    assert_eq!(Graph::load(&path).unwrap(), g);
    assert!(matches!(Graph::load(dir.path().join("missing.toml")), Err(hgpipe_sim::Error::Io { .. })));
}
