//! Published figures of the reference DeiT-tiny design, carried into
//! reports next to the modelled values.

/// Stage IIs in dataflow order.
pub const STAGE_II: [u64; 11] = [56448, 50176, 43904, 57624, 43904, 50176, 18816, 56448, 50176, 37632, 50176];
/// Weight BRAM efficiency of the matmul rows, in dataflow order.
pub const MATMUL_ETA: [(&str, f64); 6] =
    [("qkv", 1.0), ("qk", 0.681), ("rv", 0.681), ("proj", 1.0), ("mm1", 1.0), ("mm2", 1.0)];
pub const ACCELERATOR_II: u64 = 57624;
pub const STABLE_II: u64 = 57624;
pub const CLOCK_HZ: f64 = 425e6;
pub const IDEAL_FPS: f64 = 7353.0;
pub const MEASURED_FPS: f64 = 7118.0;
pub const OPS_PER_IMAGE: f64 = 2.5e9;
pub const MEASURED_GOPS: f64 = 17795.0;
pub const FIRST_IMAGE_CYCLES: u64 = 824_843;
pub const NAIVE_DSP: u64 = 3024;
pub const RESIDUAL_TENSOR_BRAMS: u64 = 14;
pub const RESIDUAL_PIPO_STAGES: u64 = 6;
pub const RESIDUAL_PIPO_BRAMS: u64 = 168;
pub const BUFFER_REDUCTION: f64 = 0.833;
pub const TOP1_A4W4: f64 = 0.7437;
pub const TOP1_A3W3: f64 = 0.7105;
/// Post-implementation figures of the A3W3 build at 425 MHz; not modelled.
pub const SYNTH_LUTS: u64 = 669_000;
pub const SYNTH_DSPS: u64 = 312;
pub const SYNTH_BRAMS: f64 = 1006.5;
pub const POWER_W: f64 = 46.7;
pub const GOPS_PER_W: f64 = 381.0;

/// Cross-platform normalization: DSPs per AI engine, BRAMs per URAM, LUTs
/// per DSP. Annotation only.
pub const DSP_PER_AIE: u64 = 32;
pub const BRAM_PER_URAM: u64 = 8;
pub const LUT_PER_DSP: u64 = 32;
