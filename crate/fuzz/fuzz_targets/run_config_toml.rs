#![no_main]

use hgpipe_cli::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = RunConfig::from_toml(text) {
            if let Ok(m) = c.model_config() {
                let _ = c.parallelism_config(&m);
            }
        }
    }
});
