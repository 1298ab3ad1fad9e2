//! Roofline evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One design point. Ceilings and bandwidth are in OP/s and bytes/s;
/// intensity is operations per external byte and may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RooflineScenario {
    pub name: String,
    pub dsp_ceiling: f64,
    #[serde(default)]
    pub lut_ceiling: f64,
    pub bandwidth: f64,
    pub intensity: f64,
}

impl RooflineScenario {
    pub fn compute_ceiling(&self) -> f64 {
        self.dsp_ceiling + self.lut_ceiling
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && !v.is_nan();
        if !(pos(self.dsp_ceiling) && self.dsp_ceiling.is_finite())
            || !(self.lut_ceiling >= 0.0 && self.lut_ceiling.is_finite())
            || !(pos(self.bandwidth) && self.bandwidth.is_finite())
            || !pos(self.intensity)
        {
            return Err(Error::invalid(format!("scenario `{}` has a non-positive parameter", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RooflinePoint {
    pub name: String,
    pub intensity: f64,
    pub attainable: f64,
    pub compute_bound: bool,
}

/// `min(compute ceiling, bandwidth * intensity)` in OP/s.
pub fn roofline(s: &RooflineScenario) -> Result<RooflinePoint> {
    s.validate()?;
    let ceiling = s.compute_ceiling();
    let memory = s.bandwidth * s.intensity;
    Ok(RooflinePoint {
        name: s.name.clone(),
        intensity: s.intensity,
        attainable: ceiling.min(memory),
        compute_bound: ceiling <= memory,
    })
}

/// Ordered list of scenarios loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(rename = "scenario")]
    pub scenarios: Vec<RooflineScenario>,
}

const DEFAULT_SCENARIOS: &str = include_str!("../data/roofline.toml");

impl ScenarioFile {
    /// The four reference design points.
    pub fn reference() -> Self {
        Self::from_toml(DEFAULT_SCENARIOS).expect("bundled scenario file is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let f: Self = toml::from_str(text)?;
        if f.scenarios.is_empty() {
            return Err(Error::invalid("scenario file is empty"));
        }
        for s in &f.scenarios {
            s.validate()?;
        }
        Ok(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn evaluate(&self) -> Result<Vec<RooflinePoint>> {
        self.scenarios.iter().map(roofline).collect()
    }
}

/// `name,intensity,attainable_tops,compute_bound` rows.
pub fn roofline_csv(points: &[RooflinePoint]) -> String {
    let mut out = String::from("name,intensity,attainable_tops,compute_bound\n");
    for p in points {
        out.push_str(&format!("{},{},{:.4},{}\n", p.name, p.intensity, p.attainable / 1e12, p.compute_bound));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(dsp: f64, bw: f64, i: f64) -> RooflineScenario {
        RooflineScenario {
            name: "x".into(),
            dsp_ceiling: dsp,
            lut_ceiling: 0.0,
            bandwidth: bw,
            intensity: i,
        }
    }

    #[test]
    fn min_rule() {
        assert_eq!(roofline(&sc(10.0, 1.0, 4.0)).unwrap().attainable, 4.0);
        let p = roofline(&sc(10.0, 1.0, f64::INFINITY)).unwrap();
        assert_eq!(p.attainable, 10.0);
        assert!(p.compute_bound);
        assert!(roofline(&sc(0.0, 1.0, 1.0)).is_err());
        assert!(roofline(&sc(1.0, 1.0, f64::NAN)).is_err());
    }

    #[test]
    fn reference_ordering() {
        let pts = ScenarioFile::reference().evaluate().unwrap();
        let tops: Vec<f64> = pts.iter().map(|p| (p.attainable / 1e11).round() / 10.0).collect();
        assert_eq!(tops, vec![1.1, 3.2, 7.8, 17.8]);
        let csv = roofline_csv(&pts);
        assert_eq!(csv.lines().count(), 5);
    }
}
