//! Hand-built hierarchical geometries with optional seeded jitter.
//!
//! * Configuration A: a tight equilateral triangle (side 8, J ≈ 2e-3)
//!   holding the injection site, followed by a five-site chain with spacing
//!   25 (J ≈ 6.4e-5). Transport out of the triangle needs dephasing to
//!   break the cluster's hybridization, giving one optimum in Γ.
//! * Configuration B: an upper route through two tight pairs (separation
//!   4.64, J ≈ 1e-2) joined by 15-unit links, and a lower bypass through a
//!   moderate pair (separation 21.5, J ≈ 1e-4) set 30 units below. Each
//!   route has its own optimal dephasing, giving two optima.

use serde::Serialize;

use crate::geometry::{Point, SpinConfiguration};
use crate::rng::Stream;
use crate::Result;

#[derive(Clone, Debug, Serialize)]
pub struct SynthGeometry {
    pub config: SpinConfiguration,
    pub inject: usize,
    pub extract: usize,
}

fn finish(mut pts: Vec<Point>, jitter: f64, seed: u64) -> Result<SynthGeometry> {
    if jitter > 0.0 {
        let mut rng = Stream::new(seed, 0);
        for p in pts.iter_mut() {
            let r = jitter * rng.uniform().sqrt();
            let th = std::f64::consts::TAU * rng.uniform();
            p[0] += r * th.cos();
            p[1] += r * th.sin();
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().map(|p| (p[0], p[1])).unzip();
    let mid = |v: &[f64]| 0.5 * (v.iter().cloned().fold(f64::INFINITY, f64::min) + v.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let (cx, cy) = (mid(&xs), mid(&ys));
    for p in pts.iter_mut() {
        p[0] -= cx;
        p[1] -= cy;
    }
    let radius = pts.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max) + 1.0;
    let extract = pts.len() - 1;
    let mut config = SpinConfiguration::from_positions(pts, radius)?;
    config.seed = seed;
    config.labels.excitation = Some(0);
    Ok(SynthGeometry { config, inject: 0, extract })
}

/// Triangle 0-1-2, chain 3..7; inject 0, extract 7.
pub fn config_a(jitter: f64, seed: u64) -> Result<SynthGeometry> {
    let side = 8.0;
    let mut pts: Vec<Point> = vec![[0.0, 0.0], [side, 0.0], [side / 2.0, side * 3f64.sqrt() / 2.0]];
    pts.extend((1..=5).map(|k| [side + 25.0 * k as f64, 0.0]));
    finish(pts, jitter, seed)
}

/// Sites: 0, upper pairs (1, 2) and (3, 4), bypass pair (5, 6), extract 7.
pub fn config_b(jitter: f64, seed: u64) -> Result<SynthGeometry> {
    let (link, tight, moderate, offset) = (15.0, 4.64, 21.5, 30.0);
    let a1 = link;
    let a2 = a1 + tight;
    let b1 = a2 + link;
    let b2 = b1 + tight;
    let f = b2 + link;
    let cx = f / 2.0;
    let pts = vec![
        [0.0, 0.0],
        [a1, 0.0],
        [a2, 0.0],
        [b1, 0.0],
        [b2, 0.0],
        [cx - moderate / 2.0, -offset],
        [cx + moderate / 2.0, -offset],
        [f, 0.0],
    ];
    finish(pts, jitter, seed)
}
