use serde::Serialize;

/// Named activations recorded during a forward pass, in visit order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    sites: Vec<(String, Vec<f64>)>,
}

impl Trace {
    pub fn record(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.sites.push((name.into(), values));
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.sites.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sites.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.sites.iter().map(|(n, v)| (n.as_str(), v.as_slice()))
    }

    pub fn max_abs(&self, name: &str) -> Option<f64> {
        self.get(name).map(|v| v.iter().fold(0.0f64, |m, x| m.max(x.abs())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteError {
    pub site: String,
    pub max_abs: f64,
    pub mean_abs: f64,
    /// Largest magnitude of the reference at this site.
    pub reference_max: f64,
}

/// Per-site error of `actual` against `reference` for every site present in
/// both with equal length.
pub fn compare(actual: &Trace, reference: &Trace) -> Vec<SiteError> {
    actual
        .iter()
        .filter_map(|(name, a)| {
            let r = reference.get(name)?;
            if r.len() != a.len() || a.is_empty() {
                return None;
            }
            let (mut max_abs, mut sum) = (0.0f64, 0.0);
            for (x, y) in a.iter().zip(r) {
                let e = (x - y).abs();
                max_abs = max_abs.max(e);
                sum += e;
            }
            Some(SiteError {
                site: name.to_string(),
                max_abs,
                mean_abs: sum / a.len() as f64,
                reference_max: r.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compare_matching_sites() {
        let mut a = Trace::default();
        let mut b = Trace::default();
        a.record("x", vec![1.0, 2.0]);
        a.record("only_a", vec![1.0]);
        b.record("x", vec![1.5, 2.0]);
        let e = compare(&a, &b);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].max_abs, 0.5);
        assert_eq!(e[0].mean_abs, 0.25);
        assert_eq!(a.max_abs("x"), Some(2.0));
    }
}
