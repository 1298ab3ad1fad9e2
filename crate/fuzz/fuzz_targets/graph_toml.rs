#![no_main]

use hgpipe_sim::{simulate, Graph, SimOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(g) = Graph::from_toml(text) {
            assert_eq!(Graph::from_toml(&g.to_toml()).unwrap(), g);
            let opts = SimOptions {
                images: 2,
                horizon: 100_000,
                record_events: false,
                ..SimOptions::default()
            };
            let _ = simulate(&g, &opts);
        }
    }
});
