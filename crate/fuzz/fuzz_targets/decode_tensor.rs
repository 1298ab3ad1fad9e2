#![no_main]

use hgpipe_core::bundle::{decode_tensor, DType, TensorEntry};
use libfuzzer_sys::fuzz_target;

// byte 0 picks the dtype, byte 1 the bit width (0 for none), bytes 2..4 the
// shape; the rest is tensor data
fuzz_target!(|data: &[u8]| {
    if data.len() < 4 {
        return;
    }
    let dtype = match data[0] % 3 {
        0 => DType::I8,
        1 => DType::I32,
        _ => DType::F32,
    };
    let entry = TensorEntry {
        name: "t".into(),
        file: "t.bin".into(),
        dtype,
        shape: vec![data[2] as usize, data[3] as usize],
        bits: (data[1] != 0).then_some(data[1] as u32 % 33),
        scale: None,
        zero_point: None,
    };
    let bytes = &data[4..];
    if let Ok(t) = decode_tensor(&entry, bytes) {
        assert_eq!(t.len(), entry.shape.iter().product::<usize>());
        assert_eq!(t.dtype(), dtype);
    }
});
