//! Table indexing and construction properties.

use hgpipe_core::lut::{
    build_exp_table, build_recip_table, build_segmented_recip, fuse_gelu_requant, index_pot, index_pot_inverted,
    index_reference, joint_range_calibration, pot_shift, special::gelu, LutTable, OutScale, TableDomain,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn pot_index_never_overflows_on_8_bit_ranges() {
    let mut violations = 0u64;
    let mut checked = 0u64;
    for n in [4u32, 5, 6] {
        let top = (1i64 << n) - 1;
        for alpha in -128i64..=127 {
            for beta in alpha + 1..=127 {
                let s = pot_shift(alpha, beta, n).unwrap();
                for d in alpha..=beta {
                    let i = index_pot(d, alpha, s);
                    let j = index_pot_inverted(d, beta, s);
                    if !(0..=top).contains(&i) || !(0..=top).contains(&j) {
                        violations += 1;
                    }
                    let r = index_reference(d as f64, alpha as f64, beta as f64, n).unwrap() as i64;
                    assert!(i <= r, "pot index {i} over-indexes reference {r} (d={d}, [{alpha},{beta}], n={n})");
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(violations, 0);
    assert!(checked > 8_000_000);
}

#[test]
fn max_error_within_slope_bound() {
    let in_scale = 0.03;
    let tables: Vec<(LutTable, Box<dyn Fn(f64) -> f64>)> = vec![
        (build_exp_table(-400, 6, 8, in_scale).unwrap(), Box::new(move |d| (d * in_scale).exp())),
        (
            fuse_gelu_requant(in_scale, 0.05, 8, -200, 300, 6).unwrap(),
            Box::new(move |d| gelu(d * in_scale)),
        ),
        (build_recip_table(100, 5000, 6, 8, 0.01).unwrap(), Box::new(|x| 1.0 / (x * 0.01))),
    ];
    for (t, f) in &tables {
        let w = (t.shift() as f64).exp2().max(1.0);
        for d in t.alpha()..=t.beta() {
            let i = t.index(d);
            let r = t.representative(i);
            let (lo, hi) = if t.inverted() { (r - w, r) } else { (r - w, r + w) };
            let steps = 200;
            let slope = (0..steps)
                .map(|k| {
                    let a = lo + (hi - lo) * k as f64 / steps as f64;
                    let b = a + (hi - lo) / steps as f64;
                    ((f(b) - f(a)) / (b - a)).abs()
                })
                .fold(0.0, f64::max);
            let bound = slope * w + 0.5 * t.out_scale() + 1e-12;
            let clipped = {
                let q = f(r) / t.out_scale();
                let top = ((1i64 << (t.out_bits() - 1)) - 1) as f64;
                q > top + 0.5 || q < -top - 1.5
            };
            if !clipped {
                assert!((t.eval(d) - f(d as f64)).abs() <= bound, "d={d}");
            }
        }
    }
}

#[test]
fn segmented_recip_beats_single_table() {
    let beta = 196 * 127;
    let seg = build_segmented_recip(beta, 6, 8, 1.0 / 127.0).unwrap();
    let single = build_recip_table(1, beta, 6, 8, 1.0 / 127.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut a, mut b) = (0.0, 0.0);
    let n = 100_000;
    for _ in 0..n {
        // the row maximum alone contributes 127, so denominators start there
        let x = (rng.gen_range(127f64.ln()..(beta as f64).ln())).exp().round() as i64;
        let f = 127.0 / x as f64;
        a += (seg.eval(x) - f).powi(2);
        b += (single.eval(x) - f).powi(2);
    }
    assert!(a * 2.0 < b, "segmented {} single {}", a / n as f64, b / n as f64);
}

proptest! {
    #[test]
    fn clamped_curves_calibrate(lo in -5000i64..-500, span in 1000i64..20000, clamp in 1.0f64..6.0, scale in 0.002f64..0.05) {
        let hi = lo + span;
        let build = |a: i64, b: i64| {
            LutTable::build(move |x| (x * scale).clamp(-clamp, clamp), TableDomain::new(a, b, 6), 4, OutScale::Fixed(clamp / 7.0))
        };
        let before = build(lo, hi).unwrap();
        let (l0, m0) = before.significant_indices();
        prop_assume!(m0 > l0);
        let cal = joint_range_calibration(&[lo, hi], build, 16).unwrap();
        prop_assert!(cal.iterations <= 16);
        let (lsi, _) = cal.table.significant_indices();
        if before.repeated_entries() > 0 {
            prop_assert_eq!(lsi, 0);
            prop_assert!(cal.table.repeated_entries() < before.repeated_entries());
        }
    }

    #[test]
    fn inverted_exp_max_hits_entry_zero(row in prop::collection::vec(-100i64..100, 1..64), alpha in -2000i64..-10) {
        let t = build_exp_table(alpha, 6, 8, 0.02).unwrap();
        let m = *row.iter().max().unwrap();
        prop_assert_eq!(t.index(m - m), 0);
        prop_assert_eq!(t.entries()[0], 127);
        for &v in &row {
            prop_assert!(t.lookup(v - m) <= 127);
        }
    }

    #[test]
    fn identity_lookup(x in 0i64..64) {
        let t = LutTable::build(|v| v, TableDomain::new(0, 63, 6), 8, OutScale::Fixed(1.0)).unwrap();
        prop_assert_eq!(t.lookup(x), x as i32);
    }
}
