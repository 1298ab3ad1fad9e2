#![no_main]

use hgpipe_core::bundle::parse_manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = parse_manifest(text) {
            for t in &m.tensors {
                assert!(t.elements().is_ok());
            }
        }
    }
});
