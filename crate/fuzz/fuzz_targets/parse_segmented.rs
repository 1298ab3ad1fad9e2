#![no_main]

use hgpipe_core::lut::parse_segmented;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(t) = parse_segmented(text) {
            assert_eq!(parse_segmented(&t.dump()).unwrap(), t);
        }
    }
});
