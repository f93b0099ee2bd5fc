//! Logarithmic dephasing grids.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GammaGrid {
    points: Vec<f64>,
}

impl GammaGrid {
    /// Sorted, deduplicated, strictly positive points.
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidInput("Γ grid must be non-empty, finite and positive".into()));
        }
        points.sort_by(f64::total_cmp);
        points.dedup_by(|a, b| (*a / *b - 1.0).abs() < 1e-9);
        Ok(GammaGrid { points })
    }

    /// `count` log-spaced points from `lo` to `hi` inclusive.
    pub fn log(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0) || !(hi >= lo) || count == 0 || (count == 1 && hi != lo) {
            return Err(Error::InvalidInput(format!("bad log grid {lo}:{hi}:{count}")));
        }
        if count == 1 {
            return Self::new(vec![lo]);
        }
        let (a, b) = (lo.log10(), hi.log10());
        Self::new((0..count).map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64)).collect())
    }

    /// `per_decade` points per decade over `[lo, hi]`, doubled inside
    /// `dense`, plus the `extra` points.
    pub fn densified(lo: f64, hi: f64, per_decade: usize, dense: (f64, f64), extra: &[f64]) -> Result<Self> {
        let decades = (hi / lo).log10();
        let count = (decades * per_decade as f64).round() as usize + 1;
        let mut pts = Self::log(lo, hi, count)?.points;
        let dd = (dense.1 / dense.0).log10();
        pts.extend(Self::log(dense.0, dense.1, (dd * 2.0 * per_decade as f64).round() as usize + 1)?.points);
        pts.extend_from_slice(extra);
        Self::new(pts)
    }

    /// Default scaling grid: 5 per decade over `[1e-7, 10]`, doubled on
    /// `[1e-4, 1e-2]`, with the fit points `1e-6`, `3.2e-5` and `0.1`.
    pub fn scaling_default() -> Self {
        Self::densified(1e-7, 10.0, 5, (1e-4, 1e-2), &[1e-6, 3.2e-5, 0.1]).expect("valid default grid")
    }

    /// Parses `value` or `lo:hi:count` (log spaced).
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad number '{s}' in Γ spec '{spec}'")));
        match parts.as_slice() {
            [v] => Self::new(vec![num(v)?]),
            [lo, hi, n] => {
                let count = n.trim().parse::<usize>().map_err(|_| Error::InvalidInput(format!("bad count in Γ spec '{spec}'")))?;
                Self::log(num(lo)?, num(hi)?, count)
            }
            _ => Err(Error::InvalidInput(format!("Γ spec '{spec}' is neither a value nor lo:hi:count"))),
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of a grid point equal to `g` within 1e-9 relative.
    pub fn position(&self, g: f64) -> Option<usize> {
        self.points.iter().position(|&p| (p / g - 1.0).abs() < 1e-9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(GammaGrid::parse("1e-3").unwrap().points(), &[1e-3]);
        let g = GammaGrid::parse("1e-4:1e-2:3").unwrap();
        assert_eq!(g.len(), 3);
        assert!((g.points()[1] / 1e-3 - 1.0).abs() < 1e-12);
        for bad in ["", "a", "1:2", "1e-2:1e-4:3", "0:1:3", "1e-3:1:x"] {
            assert!(GammaGrid::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn default_scaling_grid() {
        let g = GammaGrid::scaling_default();
        let p = g.points();
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(p[0], 1e-7);
        assert!((p[p.len() - 1] / 10.0 - 1.0).abs() < 1e-12);
        for x in [1e-6, 3.2e-5, 0.1] {
            assert!(g.position(x).is_some());
        }
        // 41 base points, 21 dense (11 shared), plus 3.2e-5.
        assert_eq!(p.len(), 41 + 10 + 1);
        let dense = p.iter().filter(|&&x| (1e-4..=1e-2).contains(&x)).count();
        assert_eq!(dense, 21);
    }
}
