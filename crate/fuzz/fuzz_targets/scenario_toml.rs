#![no_main]

use hgpipe_resource::ScenarioFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(f) = ScenarioFile::from_toml(text) {
            let _ = f.evaluate();
        }
    }
});
