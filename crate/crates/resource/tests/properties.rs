//! Cost formulas against big-integer evaluation and their algebraic
//! properties.

use hgpipe_core::vit::TiledMatmulSpec;
use hgpipe_resource::balance::balance_of;
use hgpipe_resource::{accelerator_ii, bram_count_and_efficiency, roofline, stage_ii, BramSpec, RooflineScenario};
use num::bigint::BigUint;
use num::Integer;
use proptest::prelude::*;

fn divisor_of(n: usize, pick: usize) -> usize {
    let d: Vec<usize> = (1..=n).filter(|d| n % d == 0).collect();
    d[pick % d.len()]
}

fn big_ceil(a: &BigUint, b: &BigUint) -> BigUint {
    a.div_ceil(b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn stage_ii_matches_bigint(t in 1usize..400, ci in 1usize..800, co in 1usize..800,
                               a in 0usize..64, b in 0usize..64, c in 0usize..64, passes in prop::sample::select(vec![1u64, 3])) {
        let spec = TiledMatmulSpec::new(t, ci, co, divisor_of(t, a), divisor_of(ci, b), divisor_of(co, c)).unwrap();
        let want = BigUint::from(spec.tt) * BigUint::from(spec.cit) * BigUint::from(spec.cot) * BigUint::from(passes);
        prop_assert_eq!(BigUint::from(stage_ii(&spec, passes)), want);
    }

    #[test]
    fn bram_matches_bigint(dw in 1u64..=16, cip in 1u64..64, cop in 1u64..64, cit in 1u64..2048, cot in 1u64..2048,
                           width in prop::sample::select(vec![18u64, 36, 72]), depth in prop::sample::select(vec![512u64, 1024, 2048])) {
        let bram = BramSpec { width, depth };
        let u = bram_count_and_efficiency(dw, cip, cop, cit, cot, bram).unwrap();
        let big = |v: u64| BigUint::from(v);
        let count = big_ceil(&(big(dw) * big(cip) * big(cop)), &big(width)) * big_ceil(&(big(cit) * big(cot)), &big(depth));
        prop_assert_eq!(BigUint::from(u.count), count.clone());
        let used = big(dw) * big(cip) * big(cit) * big(cop) * big(cot);
        let alloc = count * big(width) * big(depth);
        prop_assert!(u.efficiency <= 1.0);
        let exact = used == alloc;
        prop_assert_eq!(u.efficiency == 1.0, exact);
        let both_divide = (dw * cip * cop) % width == 0 && (cit * cot) % depth == 0;
        prop_assert_eq!(exact, both_divide);
    }

    #[test]
    fn roofline_monotone(dsp in 1e9f64..1e14, lut in 0f64..1e14, bw in 1e8f64..1e12, i in 1e-2f64..1e6, k in 1.0f64..10.0, which in 0usize..4) {
        let base = RooflineScenario { name: "s".into(), dsp_ceiling: dsp, lut_ceiling: lut, bandwidth: bw, intensity: i };
        let mut up = base.clone();
        match which {
            0 => up.dsp_ceiling *= k,
            1 => up.lut_ceiling = (up.lut_ceiling + 1.0) * k,
            2 => up.bandwidth *= k,
            _ => up.intensity *= k,
        }
        prop_assert!(roofline(&up).unwrap().attainable >= roofline(&base).unwrap().attainable);
    }

    #[test]
    fn balance_scale_invariant(iis in prop::collection::vec(1u64..100_000, 1..12), k in 1u64..50) {
        let names: Vec<String> = (0..iis.len()).map(|i| format!("s{i}")).collect();
        let a: Vec<(&str, u64)> = names.iter().map(|s| s.as_str()).zip(iis.iter().copied()).collect();
        let b: Vec<(&str, u64)> = names.iter().map(|s| s.as_str()).zip(iis.iter().map(|v| v * k)).collect();
        let (ra, rb) = (balance_of(&a).unwrap(), balance_of(&b).unwrap());
        prop_assert_eq!(ra.bottleneck_ii, accelerator_ii(&iis).unwrap());
        let argmax = iis.iter().position(|&v| v == ra.bottleneck_ii).unwrap();
        prop_assert_eq!(&ra.bottleneck, &names[argmax]);
        for (x, y) in ra.stages.iter().zip(&rb.stages) {
            prop_assert!((x.bubble - y.bubble).abs() < 1e-12);
        }
    }
}

/// Halving CIP and doubling CIT keeps the weight totals. It never lowers
/// efficiency while the doubled depth still fits one bank; past that the
/// extra depth row can cost more than the width saves.
#[test]
fn layout_move_sweep() {
    let bram = BramSpec::default();
    let mut counterexample = None;
    for dw in [2u64, 3, 4, 8] {
        for cip in (2..=64).step_by(2) {
            for cop in 1..=16 {
                for cit in (1..=512).step_by(7) {
                    for cot in [1u64, 2, 3, 4, 8, 16] {
                        let before = bram_count_and_efficiency(dw, cip, cop, cit, cot, bram).unwrap();
                        let after = bram_count_and_efficiency(dw, cip / 2, cop, 2 * cit, cot, bram).unwrap();
                        if 2 * cit * cot <= bram.depth {
                            assert!(after.efficiency >= before.efficiency, "dw={dw} cip={cip} cop={cop} cit={cit} cot={cot}");
                        } else if after.efficiency < before.efficiency && counterexample.is_none() {
                            counterexample = Some((dw, cip, cop, cit, cot));
                        }
                    }
                }
            }
        }
    }
    // the unrestricted claim fails, e.g. one full-width bank whose depth spills
    assert!(counterexample.is_some());
    let before = bram_count_and_efficiency(4, 9, 1, 600, 1, bram).unwrap();
    let after = bram_count_and_efficiency(4, 9, 1, 1200, 1, bram).unwrap();
    assert_eq!((before.count, after.count), (1, 2));
}
