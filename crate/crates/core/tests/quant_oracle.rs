//! Fixed-point and re-parameterization results against exact rational
//! arithmetic.

use hgpipe_core::quant::{
    fuse_bn_bias, output_requant_scale, requant, residual_rescale_factor, round_half_even, BatchNorm, BranchScale,
    FixedPointScale,
};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SQRT_BITS: u32 = 200;

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

/// `sqrt(r)` to within `2^-SQRT_BITS` relative.
fn rat_sqrt(r: &BigRational) -> BigRational {
    let scale = BigInt::one() << (2 * SQRT_BITS);
    let n = (r.numer() * r.denom() * scale).sqrt();
    BigRational::new(n, r.denom() * (BigInt::one() << SQRT_BITS))
}

fn round_half_even_rat(r: &BigRational) -> BigInt {
    let fl = r.floor();
    let frac = r - &fl;
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let base = fl.to_integer();
    if frac > half || (frac == half && base.is_odd()) {
        base + 1
    } else {
        base
    }
}

trait Odd {
    fn is_odd(&self) -> bool;
}

impl Odd for BigInt {
    fn is_odd(&self) -> bool {
        (self % BigInt::from(2)) != BigInt::zero()
    }
}

/// Distance from the nearest `k + 1/2`.
fn tie_distance(r: &BigRational) -> f64 {
    let frac = (r - r.floor()).to_f64().unwrap();
    (frac - 0.5).abs()
}

fn ulp(x: f64) -> f64 {
    let b = x.abs().to_bits();
    f64::from_bits(b + 1) - x.abs()
}

fn within_ulp(ours: f64, exact: &BigRational) -> bool {
    (rat(ours) - exact).abs() <= rat(ulp(ours))
}

fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    // log-uniform magnitude, random sign handled by the caller
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

#[test]
fn fuse_bn_bias_matches_rational_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for _ in 0..100_000 {
        let bn = BatchNorm {
            gamma: draw(&mut rng, 0.05, 5.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
            beta: rng.gen_range(-3.0..3.0),
            mean: rng.gen_range(-3.0..3.0),
            var: draw(&mut rng, 1e-3, 10.0),
            eps: 1e-5,
        };
        let (s_x, s_w) = (draw(&mut rng, 1e-3, 1.0), draw(&mut rng, 1e-3, 1.0));
        let ours = fuse_bn_bias(&bn, s_x, s_w).unwrap();
        let sd = rat_sqrt(&(rat(bn.var) + rat(bn.eps)));
        let exact = (rat(bn.beta) * sd - rat(bn.mean) * rat(bn.gamma)) / (rat(bn.gamma) * rat(s_x) * rat(s_w));
        if tie_distance(&exact) < 1e-9 {
            continue;
        }
        assert_eq!(BigInt::from(ours), round_half_even_rat(&exact), "{bn:?} s_x={s_x} s_w={s_w}");
        checked += 1;
    }
    assert!(checked > 99_000);
}

#[test]
fn output_scale_and_residual_factor_within_one_ulp() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100_000 {
        let (gamma, var, eps) = (draw(&mut rng, 0.05, 5.0), draw(&mut rng, 1e-3, 10.0), 1e-5);
        let (s_x, s_w, s_y) = (draw(&mut rng, 1e-3, 1.0), draw(&mut rng, 1e-3, 1.0), draw(&mut rng, 1e-3, 1.0));
        let ours = output_requant_scale(gamma, var, eps, s_x, s_w, s_y).unwrap();
        let exact = rat(gamma) * rat(s_x) * rat(s_w) / (rat(s_y) * rat_sqrt(&(rat(var) + rat(eps))));
        assert!(within_ulp(ours, &exact), "S {ours} vs {}", exact.to_f64().unwrap());

        let main = BranchScale { gamma, s_x, s_w, var, eps };
        let res = BranchScale {
            gamma: draw(&mut rng, 0.05, 5.0),
            s_x: draw(&mut rng, 1e-3, 1.0),
            s_w: draw(&mut rng, 1e-3, 1.0),
            var: draw(&mut rng, 1e-3, 10.0),
            eps,
        };
        let ours = residual_rescale_factor(&main, &res).unwrap();
        let f = |p: &BranchScale| rat(p.gamma) * rat(p.s_x) * rat(p.s_w) / rat_sqrt(&(rat(p.var) + rat(p.eps)));
        let exact = f(&res) / f(&main);
        assert!(within_ulp(ours, &exact), "R {ours} vs {}", exact.to_f64().unwrap());
    }
}

#[test]
fn fixed_point_apply_is_exact_rounding() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100_000 {
        let s = FixedPointScale::new(rng.gen_range(-32768..=32767), rng.gen_range(0..=40)).unwrap();
        let x: i64 = rng.gen_range(-(1i64 << 40)..(1i64 << 40));
        let exact = BigRational::new(BigInt::from(x) * BigInt::from(s.mantissa()), BigInt::one() << s.shift());
        assert_eq!(BigInt::from(s.apply(x)), round_half_even_rat(&exact));
    }
}

#[test]
fn from_f64_mantissa_error_is_half_a_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100_000 {
        let v = draw(&mut rng, 1e-9, 3e4);
        let s = FixedPointScale::from_f64(v).unwrap();
        assert!(s.mantissa().abs() <= 32767);
        // representation error at most half a unit of the last mantissa bit
        let step = (-(s.shift() as f64)).exp2();
        assert!((s.value() - v).abs() <= 0.5 * step * (1.0 + 1e-12), "{v} -> {s:?}");
        // float rounding of the exact rational agrees to one mantissa ulp
        let exact = rat(v) * BigRational::from_integer(BigInt::one() << s.shift());
        let diff = (BigInt::from(s.mantissa()) - round_half_even_rat(&exact)).abs();
        assert!(diff <= BigInt::one());
        assert_eq!(round_half_even(2.5), 2.0);
    }
}

#[test]
fn requant_in_range_for_any_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for bits in 2..=8 {
        for _ in 0..2000 {
            let s = FixedPointScale::from_f64(draw(&mut rng, 1e-6, 1e3)).unwrap();
            let x: i64 = rng.gen_range(-(1i64 << 31)..(1i64 << 31));
            let y = requant(x, rng.gen_range(-8..8), s, bits);
            let half = 1 << (bits - 1);
            assert!((-half..half).contains(&y));
        }
    }
}
