//! Joint table range calibration.
//!
//! Clamping in ReQuant-like curves fills both ends of a table with copies of
//! the clamp value. The loop below narrows `[alpha, beta]` to the inputs
//! between the last left-plateau entry (LSI) and the first right-plateau
//! entry (MSI), rebuilds the table on that range and repeats until the range
//! moves by less than one table bin.

use serde::Serialize;

use super::LutTable;
use crate::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 16;

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub alpha: i64,
    pub beta: i64,
    #[serde(skip)]
    pub table: LutTable,
    pub iterations: usize,
    pub converged: bool,
    /// Range collapsed to a single input value.
    pub degenerate: bool,
    /// `(alpha, beta, repeated entries)` of every table built.
    pub history: Vec<(i64, i64, usize)>,
}

/// Calibrates the input range of a non-inverted table.
///
/// `build` constructs the table for a candidate `[alpha, beta]`; the initial
/// range is the sample min/max.
pub fn joint_range_calibration(
    samples: &[i64],
    build: impl Fn(i64, i64) -> Result<LutTable>,
    max_iters: usize,
) -> Result<Calibration> {
    if max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    let (Some(&lo), Some(&hi)) = (samples.iter().min(), samples.iter().max()) else {
        return Err(Error::invalid("calibration needs at least one sample"));
    };
    if lo == hi {
        let probe = build(lo, lo + 1)?;
        let value = probe.lookup(lo);
        let table = LutTable::constant(lo, probe.addr_bits(), probe.out_bits(), probe.out_scale(), value);
        return Ok(Calibration {
            alpha: lo,
            beta: lo,
            table,
            iterations: 0,
            converged: true,
            degenerate: true,
            history: Vec::new(),
        });
    }

    let (mut alpha, mut beta) = (lo, hi);
    let mut history = Vec::new();
    let mut table = build(alpha, beta)?;
    if table.inverted() {
        return Err(Error::invalid("joint calibration applies to non-inverted tables"));
    }
    history.push((alpha, beta, table.repeated_entries()));
    let mut converged = false;
    let mut iterations = 1;
    loop {
        let (lsi, msi) = table.significant_indices();
        let (new_alpha, new_beta) = if msi > lsi {
            table.input_span_of(lsi, msi)
        } else {
            // the whole reachable range is one plateau: nothing to narrow to
            converged = true;
            break;
        };
        let bin = (table.shift() as f64).exp2();
        let moved = ((new_alpha - alpha) as f64).abs() >= bin || ((beta - new_beta) as f64).abs() >= bin;
        if !moved || new_beta <= new_alpha {
            converged = true;
            break;
        }
        if iterations == max_iters {
            break;
        }
        alpha = new_alpha;
        beta = new_beta;
        table = build(alpha, beta)?;
        iterations += 1;
        history.push((alpha, beta, table.repeated_entries()));
    }
    Ok(Calibration {
        alpha,
        beta,
        table,
        iterations,
        converged,
        degenerate: false,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lut::{build_requant_table, OutScale, TableDomain};

    fn clamp_curve(alpha: i64, beta: i64) -> Result<LutTable> {
        // requant to 3 bits with clamp at |x| > ~4/0.02
        build_requant_table(alpha, beta, 6, 3, 0.02)
    }

    #[test]
    fn fixed_point_range_is_kept() {
        let samples: Vec<i64> = (0..=63).collect();
        let cal = joint_range_calibration(&samples, |a, b| {
            LutTable::build(|x| x, TableDomain::new(a, b, 6), 8, OutScale::Fixed(1.0))
        }, 16)
        .unwrap();
        assert_eq!((cal.alpha, cal.beta), (0, 63));
        assert_eq!(cal.iterations, 1);
        assert!(cal.converged);
    }

    #[test]
    fn left_clamped_quarter_moves_alpha() {
        // inputs in [-800, 800]; clamp below -200*... first quarter of entries
        let samples = vec![-1000, 1000];
        let build = |a: i64, b: i64| {
            LutTable::build(|x| (x / 100.0).clamp(-5.0, 50.0), TableDomain::new(a, b, 6), 8, OutScale::Fixed(1.0))
        };
        let before = build(-1000, 1000).unwrap();
        let plateau = before.entries().iter().take_while(|&&e| e == -5).count();
        assert!(plateau >= 16);
        let cal = joint_range_calibration(&samples, build, 16).unwrap();
        assert!(cal.alpha > -1000);
        assert_eq!(cal.table.significant_indices().0, 0);
        assert!(cal.converged);
    }

    #[test]
    fn clamped_curve_loses_repeats() {
        let samples = vec![-2000, 2000];
        let before = clamp_curve(-2000, 2000).unwrap().repeated_entries();
        let cal = joint_range_calibration(&samples, clamp_curve, 16).unwrap();
        assert!(cal.table.repeated_entries() < before);
        assert_eq!(cal.table.repeated_entries(), 0);
        assert_eq!(cal.table.significant_indices().0, 0);
        assert!(cal.iterations <= 16);
    }

    #[test]
    fn monotone_curve_repeats_do_not_grow() {
        let samples = vec![0, 5000];
        let build = |a: i64, b: i64| {
            LutTable::build(|x| (x / 300.0).min(7.0), TableDomain::new(a, b, 6), 4, OutScale::Fixed(1.0))
        };
        let before = build(0, 5000).unwrap().repeated_entries();
        let cal = joint_range_calibration(&samples, build, 16).unwrap();
        assert!(cal.table.repeated_entries() <= before);
    }

    #[test]
    fn error_paths() {
        assert!(joint_range_calibration(&[], clamp_curve, 16).is_err());
        assert!(joint_range_calibration(&[1, 2], clamp_curve, 0).is_err());
        let cal = joint_range_calibration(&[7, 7, 7], clamp_curve, 16).unwrap();
        assert!(cal.degenerate);
        assert_eq!(cal.table.lookup(7), cal.table.lookup(1000));
    }
}
