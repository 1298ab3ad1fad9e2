//! Shallowest deadlock-free FIFO depth.

use crate::engine::{simulate, SimOptions};
use crate::graph::Graph;
use crate::{Error, Result};

/// `true` when the graph completes with `channel` at `depth`, `false` on
/// deadlock.
pub fn completes_at(graph: &Graph, channel: &str, depth: u64, opts: &SimOptions) -> Result<bool> {
    let mut g = graph.clone();
    g.set_fifo_depth(channel, depth)?;
    let o = SimOptions {
        record_events: false,
        ..*opts
    };
    match simulate(&g, &o) {
        Ok(_) => Ok(true),
        Err(Error::Deadlock { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

fn check_bounds(graph: &Graph, channel: &str, lo: u64, hi: u64, opts: &SimOptions) -> Result<()> {
    if lo > hi {
        return Err(Error::InvalidArgument(format!("empty depth range {lo}..={hi}")));
    }
    if !completes_at(graph, channel, hi, opts)? {
        return Err(Error::NoDeadlockFreeDepth {
            channel: channel.into(),
            hi,
        });
    }
    Ok(())
}

/// Binary search for the smallest depth in `lo..=hi` at which the graph
/// completes, assuming deeper never deadlocks where shallower completes.
pub fn min_fifo_depth(graph: &Graph, channel: &str, lo: u64, hi: u64, opts: &SimOptions) -> Result<u64> {
    check_bounds(graph, channel, lo, hi, opts)?;
    let (mut lo, mut hi) = (lo, hi);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if completes_at(graph, channel, mid, opts)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// [`min_fifo_depth`] probing `jobs` depths at a time on scoped threads.
pub fn min_fifo_depth_parallel(graph: &Graph, channel: &str, lo: u64, hi: u64, opts: &SimOptions, jobs: usize) -> Result<u64> {
    if jobs <= 1 {
        return min_fifo_depth(graph, channel, lo, hi, opts);
    }
    check_bounds(graph, channel, lo, hi, opts)?;
    let (mut lo, mut hi) = (lo, hi);
    while lo < hi {
        let span = hi - lo;
        let k = (jobs as u64).min(span);
        let probes: Vec<u64> = (1..=k).map(|i| lo + (span * i) / (k + 1)).collect();
        let results: Vec<Result<bool>> = std::thread::scope(|s| {
            let handles: Vec<_> = probes.iter().map(|&d| s.spawn(move || completes_at(graph, channel, d, opts))).collect();
            handles.into_iter().map(|h| h.join().expect("probe thread panicked")).collect()
        });
        let mut new_lo = lo;
        let mut new_hi = hi;
        for (&d, r) in probes.iter().zip(results) {
            if r? {
                new_hi = new_hi.min(d);
            } else {
                new_lo = new_lo.max(d + 1);
            }
        }
        if new_lo > new_hi {
            return Err(Error::InvalidArgument(format!("completion is not monotone in the depth of `{channel}`")));
        }
        (lo, hi) = (new_lo, new_hi);
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ChannelKind, ChannelSpec, StageSpec};

    /// `a` feeds `c` directly and through `b`, which gathers a whole image
    /// of `n` tiles before emitting.
    fn branch_join(n: u64) -> Graph {
        let st = |name: &str, cost| StageSpec {
            name: name.into(),
            cost,
            tiles: n,
        };
        let ch = |name: &str, from: &str, to: &str, kind| ChannelSpec {
            name: name.into(),
            from: from.into(),
            to: to.into(),
            kind,
        };
        Graph {
            stages: vec![st("a", 1), st("b", 1), st("c", 1)],
            channels: vec![
                ch("ab", "a", "b", ChannelKind::DeepBuffer { staging: n }),
                ch("bc", "b", "c", ChannelKind::Fifo { depth: 2 }),
                ch("ac", "a", "c", ChannelKind::Fifo { depth: 1 }),
            ],
        }
    }

    #[test]
    fn straight_chain_needs_one() {
        let g = Graph {
            stages: vec![
                StageSpec {
                    name: "a".into(),
                    cost: 3,
                    tiles: 4,
                },
                StageSpec {
                    name: "b".into(),
                    cost: 5,
                    tiles: 4,
                },
            ],
            channels: vec![ChannelSpec {
                name: "ab".into(),
                from: "a".into(),
                to: "b".into(),
                kind: ChannelKind::Fifo { depth: 8 },
            }],
        };
        assert_eq!(min_fifo_depth(&g, "ab", 0, 16, &SimOptions::default()).unwrap(), 1);
    }

    #[test]
    fn branch_join_needs_a_full_image() {
        let n = 10;
        let g = branch_join(n);
        let o = SimOptions::default();
        let d = min_fifo_depth(&g, "ac", 0, 64, &o).unwrap();
        // every tile of the image must pass `a` before `b` emits anything
        assert_eq!(d, n);
        assert_eq!(min_fifo_depth_parallel(&g, "ac", 0, 64, &o, 4).unwrap(), d);
        for depth in 0..=20 {
            assert_eq!(completes_at(&g, "ac", depth, &o).unwrap(), depth >= d, "depth {depth}");
        }
    }

    #[test]
    fn errors() {
        let g = branch_join(10);
        let o = SimOptions::default();
        assert!(matches!(min_fifo_depth(&g, "ac", 0, 3, &o), Err(Error::NoDeadlockFreeDepth { .. })));
        assert!(min_fifo_depth(&g, "ab", 0, 3, &o).is_err());
        assert!(min_fifo_depth(&g, "ac", 5, 3, &o).is_err());
    }
}
