//! Reference special functions used when sampling tables.

use std::f64::consts::FRAC_1_SQRT_2;

pub use libm::erf;

/// `x/2 * (1 + erf(x/sqrt(2)))`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x * FRAC_1_SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_matches_statrs() {
        let mut x = -7.0;
        while x <= 7.0 {
            let ours = erf(x);
            let theirs = statrs::function::erf::erf(x);
            assert!((ours - theirs).abs() < 1e-10, "x={x}: {ours} vs {theirs}");
            x += 0.0137;
        }
    }

    #[test]
    fn erf_known_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-15);
        assert!((erf(-2.0) + 0.995_322_265_018_952_7).abs() < 1e-15);
        assert!((erf(3.0) - 0.999_977_909_503_001_4).abs() < 1e-15);
    }

    #[test]
    fn gelu_shape() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-12);
        assert!(gelu(-10.0).abs() < 1e-12);
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-14);
        // minimum near x = -0.7518
        assert!(gelu(-0.75) < gelu(-0.5) && gelu(-0.75) < gelu(-1.0));
    }
}
