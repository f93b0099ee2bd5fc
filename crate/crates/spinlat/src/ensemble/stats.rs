//! Order statistics, the percentile bootstrap, and the two-sample KS test.

use serde::Serialize;

use crate::rng::Stream;
use crate::{Error, Result};

/// Median of finite values (mean of the middle pair for even counts).
pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

/// Median by selection; reorders `values`. Same result as [`median`].
pub fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    let (_, &mut hi, _) = values.select_nth_unstable_by(n / 2, f64::total_cmp);
    if n % 2 == 1 {
        return hi;
    }
    let lo = values[..n / 2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    lo + 0.5 * (hi - lo)
}

/// Linearly interpolated percentile (the usual "type 7" definition).
/// Returns NaN for an empty slice.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, p)
}

pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * (p / 100.0).clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Point estimate with a confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, lo: value, hi: value }
    }

    /// Interval from bootstrap replicates, widened if needed so that it
    /// contains the point estimate.
    pub fn from_replicates(value: f64, replicates: &[f64], level: f64) -> Self {
        let finite: Vec<f64> = replicates.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            return Estimate::exact(value);
        }
        let tail = 50.0 * (1.0 - level);
        let lo = percentile(&finite, tail);
        let hi = percentile(&finite, 100.0 - tail);
        Estimate { value, lo: lo.min(value), hi: hi.max(value) }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Confidence level used throughout: the one-sigma percentile interval.
pub const CI_LEVEL: f64 = 0.68;

/// Indices of a bootstrap resample of `n` items.
pub fn resample_indices(rng: &mut Stream, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.below(n)).collect()
}

/// Percentile-bootstrap 68% interval of the median.
pub fn bootstrap_median(samples: &[f64], resamples: usize, seed: u64) -> Result<Estimate> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput("bootstrap needs at least two samples".into()));
    }
    if resamples < 100 {
        return Err(Error::InvalidInput("use at least 100 bootstrap resamples".into()));
    }
    let mut rng = Stream::new(seed, BOOTSTRAP_STREAM);
    let reps: Vec<f64> = (0..resamples)
        .map(|_| {
            let pick: Vec<f64> = resample_indices(&mut rng, samples.len()).into_iter().map(|i| samples[i]).collect();
            median(&pick)
        })
        .collect();
    Ok(Estimate::from_replicates(median(samples), &reps, CI_LEVEL))
}

/// Stream id reserved for bootstrap draws, far from realization streams.
pub(crate) const BOOTSTRAP_STREAM: u64 = 1 << 62;

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic KS critical value at significance `alpha`.
pub fn ks_critical(na: usize, nb: usize, alpha: f64) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    let (a, b) = (na as f64, nb as f64);
    c * ((a + b) / (a * b)).sqrt()
}
