#![no_main]

use hgpipe_core::lut::parse_table;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(t) = parse_table(text) {
            assert_eq!(parse_table(&t.dump()).unwrap(), t);
        }
    }
});
