#![no_main]

use hgpipe_resource::ParallelismConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = ParallelismConfig::from_toml(text) {
            assert_eq!(ParallelismConfig::from_toml(&c.to_toml()).unwrap(), c);
            let _ = c.iis();
        }
    }
});
