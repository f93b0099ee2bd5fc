//! Random spin configurations in a disc and their dipolar couplings.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::rng::Stream;
use crate::{Error, Result};

pub type Point = [f64; 2];

/// Default minimum separation between sampled sites, in length units.
pub const DEFAULT_MIN_SEPARATION: f64 = 1e-3;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excitation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gateway: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinConfiguration {
    pub n: usize,
    pub radius: f64,
    pub seed: u64,
    pub positions: Vec<Point>,
    pub energies: Vec<f64>,
    #[serde(default)]
    pub labels: Labels,
}

impl SpinConfiguration {
    /// Wraps explicit coordinates. Energies default to zero.
    pub fn from_positions(positions: Vec<Point>, radius: f64) -> Result<Self> {
        let n = positions.len();
        let c = SpinConfiguration {
            n,
            radius,
            seed: 0,
            positions,
            energies: vec![0.0; n],
            labels: Labels::default(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.n || self.energies.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "n = {} but {} positions and {} energies",
                self.n,
                self.positions.len(),
                self.energies.len()
            )));
        }
        if !(self.radius > 0.0) {
            return Err(Error::InvalidInput("radius must be positive".into()));
        }
        // Tolerate round-off from sqrt(u)·R landing a hair outside.
        let slack = 1e-12 * self.radius;
        for (i, p) in self.positions.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite()) || norm(*p) > self.radius + slack {
                return Err(Error::InvalidInput(format!("site {i} lies outside the disc")));
            }
        }
        for i in 0..self.n {
            for j in 0..i {
                if distance(self.positions[i], self.positions[j]) == 0.0 {
                    return Err(Error::DegenerateGeometry(format!("sites {j} and {i} coincide")));
                }
            }
        }
        for site in [self.labels.excitation, self.labels.gateway].into_iter().flatten() {
            if site >= self.n {
                return Err(Error::InvalidInput(format!("label points at missing site {site}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: SpinConfiguration =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

fn norm(p: Point) -> f64 {
    p[0].hypot(p[1])
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// `n` points uniform over the disc, drawn from stream 0 of `seed`.
pub fn generate_configuration(
    n: usize,
    radius: f64,
    seed: u64,
    min_separation: f64,
) -> Result<SpinConfiguration> {
    generate_configuration_stream(n, radius, seed, 0, min_separation)
}

/// As [`generate_configuration`] but on an explicit stream, so campaign
/// realizations can be generated independently.
pub fn generate_configuration_stream(
    n: usize,
    radius: f64,
    seed: u64,
    stream: u64,
    min_separation: f64,
) -> Result<SpinConfiguration> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one site".into()));
    }
    if !(radius > 0.0) || !(min_separation >= 0.0) {
        return Err(Error::InvalidInput("radius must be positive, min_separation non-negative".into()));
    }
    let mut rng = Stream::new(seed, stream);
    let max_attempts = 10_000 + 1_000 * n;
    let mut positions: Vec<Point> = Vec::with_capacity(n);
    let mut attempts = 0;
    while positions.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Sampling {
                attempts: max_attempts,
                reason: format!("cannot fit {n} sites {min_separation} apart in radius {radius}"),
            });
        }
        let r = radius * rng.uniform().sqrt();
        let theta = std::f64::consts::TAU * rng.uniform();
        let p = [r * theta.cos(), r * theta.sin()];
        if positions.iter().all(|&q| {
            let d = distance(p, q);
            d > 0.0 && d >= min_separation
        }) {
            positions.push(p);
        }
    }
    Ok(SpinConfiguration {
        n,
        radius,
        seed,
        positions,
        energies: vec![0.0; n],
        labels: Labels::default(),
    })
}

/// Orientation-dependent factor `1 − 3cos²θ`, with θ the angle between the
/// inter-spin vector (in the z = 0 plane) and the quantization axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularModel {
    pub axis: [f64; 3],
}

impl AngularModel {
    fn factor(&self, dx: f64, dy: f64) -> f64 {
        let a = self.axis;
        let an = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        let cos = (dx * a[0] + dy * a[1]) / (dx.hypot(dy) * an);
        1.0 - 3.0 * cos * cos
    }
}

pub fn dipolar_coupling(ri: Point, rj: Point, j_max: f64, angular: Option<&AngularModel>) -> Result<f64> {
    let (dx, dy) = (rj[0] - ri[0], rj[1] - ri[1]);
    let d = dx.hypot(dy);
    if d == 0.0 {
        return Err(Error::DegenerateGeometry("coincident positions".into()));
    }
    let iso = j_max / (d * d * d);
    Ok(match angular {
        Some(m) => iso * m.factor(dx, dy),
        None => iso,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix {
    pub values: Array2<f64>,
    pub j_max: f64,
}

impl CouplingMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

pub fn coupling_matrix(
    config: &SpinConfiguration,
    j_max: f64,
    angular: Option<&AngularModel>,
) -> Result<CouplingMatrix> {
    let n = config.n;
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let v = dipolar_coupling(config.positions[i], config.positions[j], j_max, angular)?;
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Ok(CouplingMatrix { values, j_max })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub below: usize,
    pub above: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingStats {
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub m: Vec<f64>,
    pub jmax_bath: f64,
    pub histogram: Histogram,
}

/// `n_bins + 1` edges spaced evenly in log10 between `lo` and `hi`.
pub fn log_bins(lo: f64, hi: f64, n_bins: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n_bins > 0);
    let (a, b) = (lo.log10(), hi.log10());
    (0..=n_bins)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / n_bins as f64))
        .collect()
}

pub fn coupling_stats(cm: &CouplingMatrix, edges: &[f64]) -> CouplingStats {
    let n = cm.n();
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; n];
    let mut m = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let a = cm.values[[i, j]].abs();
                s1[i] += a;
                s2[i] += a * a;
                m[i] = m[i].max(a);
            }
        }
    }
    s2.iter_mut().for_each(|v| *v = v.sqrt());
    let jmax_bath = m.iter().cloned().fold(0.0, f64::max);

    let nb = edges.len().saturating_sub(1);
    let mut hist = Histogram { edges: edges.to_vec(), counts: vec![0; nb], below: 0, above: 0 };
    for i in 0..n {
        for j in 0..i {
            let v = cm.values[[i, j]].abs();
            if nb == 0 || v < edges[0] {
                hist.below += 1;
            } else if v >= edges[nb] {
                hist.above += 1;
            } else {
                // Edges are sorted; partition_point finds the first edge > v.
                let k = edges.partition_point(|&e| e <= v) - 1;
                hist.counts[k] += 1;
            }
        }
    }
    CouplingStats { s1, s2, m, jmax_bath, histogram: hist }
}

/// Adds a gateway site coupled to the excitation site with strength
/// `j_target`, at distance `(j_max / j_target)^(1/3)`.
///
/// Of 64 evenly spaced directions, those that keep the gateway inside the
/// disc and clear of other sites are eligible; the one farthest from its
/// nearest neighbour wins.
pub fn place_gateway(config: &SpinConfiguration, j_target: f64, j_max: f64) -> Result<SpinConfiguration> {
    let exc = config
        .labels
        .excitation
        .ok_or_else(|| Error::InvalidInput("configuration has no excitation site".into()))?;
    let ratio = j_target / j_max;
    if !(1e-4..=1.0).contains(&ratio) {
        return Err(Error::InvalidInput(format!("gateway coupling {j_target} outside [1e-4, 1]·J_max")));
    }
    let d = ratio.recip().cbrt();
    let origin = config.positions[exc];
    let slack = 1e-12 * config.radius;
    let mut best: Option<(f64, Point)> = None;
    for k in 0..64 {
        let th = std::f64::consts::TAU * k as f64 / 64.0;
        let g = [origin[0] + d * th.cos(), origin[1] + d * th.sin()];
        if norm(g) > config.radius + slack {
            continue;
        }
        let nearest = config
            .positions
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != exc)
            .map(|(_, &q)| distance(g, q))
            .fold(f64::INFINITY, f64::min);
        if nearest < DEFAULT_MIN_SEPARATION {
            continue;
        }
        if best.is_none_or(|(b, _)| nearest > b) {
            best = Some((nearest, g));
        }
    }
    let (_, g) = best.ok_or_else(|| {
        Error::Placement(format!("no free direction at distance {d:.4} inside radius {}", config.radius))
    })?;
    let mut out = config.clone();
    out.positions.push(g);
    out.energies.push(0.0);
    out.n += 1;
    out.labels.gateway = Some(out.n - 1);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_site() {
        let c = generate_configuration(1, 5.0, 0, DEFAULT_MIN_SEPARATION).unwrap();
        assert_eq!(c.positions.len(), 1);
        assert!(norm(c.positions[0]) <= 5.0);
    }

    #[test]
    fn ten_sites_reproducible() {
        let a = generate_configuration(10, 16.0, 42, DEFAULT_MIN_SEPARATION).unwrap();
        let b = generate_configuration(10, 16.0, 42, DEFAULT_MIN_SEPARATION).unwrap();
        assert_eq!(a.positions.len(), 10);
        for (p, q) in a.positions.iter().zip(&b.positions) {
            assert_eq!(p[0].to_bits(), q[0].to_bits());
            assert_eq!(p[1].to_bits(), q[1].to_bits());
        }
    }

    #[test]
    fn infeasible_packing_is_reported() {
        let e = generate_configuration(50, 1.0, 0, 1.0).unwrap_err();
        assert!(matches!(e, Error::Sampling { .. }));
    }

    #[test]
    fn coupling_examples() {
        assert_eq!(dipolar_coupling([0.0, 0.0], [1.0, 0.0], 1.0, None).unwrap(), 1.0);
        assert_eq!(dipolar_coupling([0.0, 0.0], [0.0, 2.0], 1.0, None).unwrap(), 0.125);
        assert!(matches!(
            dipolar_coupling([1.0, 1.0], [1.0, 1.0], 1.0, None),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn magic_angle_zero() {
        // Axis in the plane at θ with cos²θ = 1/3 relative to the x axis.
        let c = (1.0f64 / 3.0).sqrt();
        let m = AngularModel { axis: [c, (1.0 - c * c).sqrt(), 0.0] };
        let v = dipolar_coupling([0.0, 0.0], [2.0, 0.0], 1.0, Some(&m)).unwrap();
        assert!(v.abs() < 1e-15);
        // Axis perpendicular to the plane: factor 1.
        let z = AngularModel { axis: [0.0, 0.0, 1.0] };
        assert_eq!(dipolar_coupling([0.0, 0.0], [2.0, 0.0], 1.0, Some(&z)).unwrap(), 0.125);
    }

    #[test]
    fn stats_single_pair() {
        let mut v = Array2::zeros((2, 2));
        v[[0, 1]] = 0.5;
        v[[1, 0]] = 0.5;
        let s = coupling_stats(&CouplingMatrix { values: v, j_max: 1.0 }, &log_bins(1e-3, 1.0, 3));
        assert_eq!(s.s1, vec![0.5, 0.5]);
        assert_eq!(s.s2, vec![0.5, 0.5]);
        assert_eq!(s.m, vec![0.5, 0.5]);
        assert_eq!(s.jmax_bath, 0.5);
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), 1);
    }

    #[test]
    fn stats_three_sites_by_hand() {
        // Edges 0-1: 0.1, 0-2: 0.2, 1-2: 0.3. Site 2 sits on the 0.2 and 0.3 edges.
        let mut v = Array2::zeros((3, 3));
        for &(i, j, x) in &[(0, 1, 0.1), (0, 2, 0.2), (1, 2, 0.3)] {
            v[[i, j]] = x;
            v[[j, i]] = x;
        }
        let s = coupling_stats(&CouplingMatrix { values: v, j_max: 1.0 }, &log_bins(1e-2, 1.0, 4));
        assert_eq!(s.jmax_bath, 0.3);
        assert!((s.s1[2] - 0.5).abs() < 1e-15);
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), 3);
    }

    #[test]
    fn gateway_distance_and_coupling() {
        let mut c = generate_configuration(10, 32.0, 5, DEFAULT_MIN_SEPARATION).unwrap();
        c.labels.excitation = Some(0);
        for &(j, d) in &[(1.0, 1.0), (1e-3, 10.0)] {
            let g = place_gateway(&c, j, 1.0).unwrap();
            let gi = g.labels.gateway.unwrap();
            let dist = distance(g.positions[0], g.positions[gi]);
            assert!((dist - d).abs() < 1e-12 * d);
            let jj = dipolar_coupling(g.positions[0], g.positions[gi], 1.0, None).unwrap();
            assert!((jj - j).abs() <= 1e-12 * j);
            g.validate().unwrap();
        }
        assert!(place_gateway(&c, 1e-5, 1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut c = generate_configuration(4, 3.0, 9, DEFAULT_MIN_SEPARATION).unwrap();
        c.labels.excitation = Some(1);
        let back = SpinConfiguration::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn generated_configurations_are_valid(n in 1usize..30, radius in 1.0f64..50.0, seed in any::<u64>()) {
            let c = generate_configuration(n, radius, seed, DEFAULT_MIN_SEPARATION).unwrap();
            c.validate().unwrap();
            let cm = coupling_matrix(&c, 1.0, None).unwrap();
            for i in 0..n {
                prop_assert_eq!(cm.values[[i, i]], 0.0);
                for j in 0..n {
                    prop_assert_eq!(cm.values[[i, j]], cm.values[[j, i]]);
                    if i != j {
                        prop_assert!(cm.values[[i, j]] > 0.0);
                    }
                }
            }
            let s = coupling_stats(&cm, &log_bins(1e-8, 1e8, 16));
            for i in 0..n {
                prop_assert!(s.m[i] <= s.s2[i] * (1.0 + 1e-12));
                prop_assert!(s.s2[i] <= s.s1[i] * (1.0 + 1e-12));
            }
            let mmax = s.m.iter().cloned().fold(0.0, f64::max);
            prop_assert_eq!(s.jmax_bath, mmax);
        }

        #[test]
        fn generation_is_pure(seed in any::<u64>()) {
            let a = generate_configuration(6, 8.0, seed, 0.01).unwrap();
            let b = generate_configuration(6, 8.0, seed, 0.01).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
