//! Pipeline balance and ideal throughput.

use serde::Serialize;

use crate::parallelism::ParallelismConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageBalance {
    pub name: String,
    pub ii: u64,
    /// `1 - ii / bottleneck ii`.
    pub bubble: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub stages: Vec<StageBalance>,
    pub bottleneck: String,
    pub bottleneck_ii: u64,
    /// Stage idling the most.
    pub largest_bubble: String,
}

/// Bubble fraction per stage. The first stage with the maximal II is the
/// bottleneck.
pub fn balance_report(pcfg: &ParallelismConfig) -> Result<BalanceReport> {
    let iis = pcfg.iis()?;
    let named: Vec<(&str, u64)> = pcfg.stages.iter().map(|s| s.name.as_str()).zip(iis).collect();
    balance_of(&named)
}

pub fn balance_of(named: &[(&str, u64)]) -> Result<BalanceReport> {
    let Some(&(_, max)) = named.iter().max_by_key(|(_, ii)| *ii) else {
        return Err(Error::invalid("no stages to balance"));
    };
    if max == 0 {
        return Err(Error::invalid("stage IIs must be positive"));
    }
    let bottleneck = named.iter().find(|(_, ii)| *ii == max).unwrap().0;
    let stages: Vec<StageBalance> = named
        .iter()
        .map(|&(n, ii)| StageBalance {
            name: n.into(),
            ii,
            bubble: 1.0 - ii as f64 / max as f64,
        })
        .collect();
    let largest_bubble = named.iter().min_by_key(|(_, ii)| *ii).unwrap().0.to_string();
    Ok(BalanceReport {
        stages,
        bottleneck: bottleneck.into(),
        bottleneck_ii: max,
        largest_bubble,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Throughput {
    pub images_per_s: f64,
    pub ops_per_s: f64,
}

/// `clock / ii` images per second and that times `ops_per_image`.
pub fn throughput(ii: u64, clock_hz: f64, ops_per_image: f64) -> Result<Throughput> {
    if ii == 0 || !(clock_hz > 0.0 && clock_hz.is_finite()) || !(ops_per_image >= 0.0 && ops_per_image.is_finite()) {
        return Err(Error::invalid("throughput needs a positive II and clock"));
    }
    let images_per_s = clock_hz / ii as f64;
    Ok(Throughput {
        images_per_s,
        ops_per_s: images_per_s * ops_per_image,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deit_tiny_balance() {
        let b = balance_report(&ParallelismConfig::deit_tiny()).unwrap();
        assert_eq!(b.bottleneck, "softmax");
        assert_eq!(b.bottleneck_ii, 57624);
        let qkv = b.stages.iter().find(|s| s.name == "qkv").unwrap();
        assert!((qkv.bubble - (1.0 - 50176.0 / 57624.0)).abs() < 1e-15);
        assert!((qkv.bubble - 0.129).abs() < 1e-3);
        assert_eq!(b.largest_bubble, "res_add1");
    }

    #[test]
    fn equal_iis_have_no_bubbles() {
        let b = balance_of(&[("a", 5), ("b", 5)]).unwrap();
        assert!(b.stages.iter().all(|s| s.bubble == 0.0));
        assert!(balance_of(&[]).is_err());
    }

    #[test]
    fn throughput_examples() {
        let t = throughput(57624, 425e6, 2.5e9).unwrap();
        assert!((t.images_per_s - 7375.4).abs() < 0.1);
        let d = throughput(57624, 850e6, 2.5e9).unwrap();
        assert!((d.images_per_s - 2.0 * t.images_per_s).abs() < 1e-9);
        assert!(throughput(0, 1.0, 1.0).is_err());
    }
}
