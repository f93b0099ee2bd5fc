//! Least-squares fits for the scaling laws: power law (in log–log space),
//! linear, pure quadratic, and offset exponential (by variable projection).

use serde::{Deserialize, Serialize};

use super::stats::{resample_indices, Estimate, BOOTSTRAP_STREAM, CI_LEVEL};
use crate::rng::Stream;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// `y = A·x^α`; parameters `[A, α]`.
    PowerLaw,
    /// `y = a·x + b`; parameters `[a, b]`.
    Linear,
    /// `y = a·x²`; parameter `[a]`.
    Quadratic,
    /// `y = C·e^(−αx) + b`; parameters `[C, α, b]`.
    Exponential,
}

impl FitModel {
    pub fn param_count(self) -> usize {
        match self {
            FitModel::PowerLaw | FitModel::Linear => 2,
            FitModel::Quadratic => 1,
            FitModel::Exponential => 3,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            FitModel::PowerLaw => &["A", "alpha"],
            FitModel::Linear => &["a", "b"],
            FitModel::Quadratic => &["a"],
            FitModel::Exponential => &["C", "alpha", "b"],
        }
    }

    pub fn eval(self, p: &[f64], x: f64) -> f64 {
        match self {
            FitModel::PowerLaw => p[0] * x.powf(p[1]),
            FitModel::Linear => p[0] * x + p[1],
            FitModel::Quadratic => p[0] * x * x,
            FitModel::Exponential => p[0] * (-p[1] * x).exp() + p[2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitResult {
    pub model: FitModel,
    pub params: Vec<Estimate>,
    /// Weighted residual norm; in log space for power laws.
    pub residual: f64,
    pub points: usize,
}

impl FitResult {
    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|e| e.value).collect()
    }

    /// Replaces the intervals with percentiles of externally produced
    /// replicate parameter sets (for example, refits on resampled ensembles).
    pub fn with_replicates(mut self, replicates: &[Vec<f64>]) -> Self {
        for (k, e) in self.params.iter_mut().enumerate() {
            let reps: Vec<f64> = replicates.iter().map(|r| r[k]).collect();
            *e = Estimate::from_replicates(e.value, &reps, CI_LEVEL);
        }
        self
    }
}

/// Weighted linear least squares `min Σ w (y − Xβ)²` via normal equations
/// on centred, scaled columns. Small problems only.
fn lstsq(cols: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let p = cols.len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    let scale: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE)).collect();
    for i in 0..y.len() {
        for r in 0..p {
            let xr = cols[r][i] / scale[r];
            b[r] += w[i] * xr * y[i];
            for c in 0..p {
                a[r][c] += w[i] * xr * cols[c][i] / scale[c];
            }
        }
    }
    // Gaussian elimination with partial pivoting.
    for k in 0..p {
        let piv = (k..p).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).expect("non-empty");
        if a[piv][k].abs() < 1e-12 * a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())) {
            return Err(Error::Singular("fit design matrix is rank deficient".into()));
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..p {
            let f = a[i][k] / a[k][k];
            for j in k..p {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; p];
    for k in (0..p).rev() {
        let s: f64 = (k + 1..p).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Ok(x.iter().zip(&scale).map(|(v, s)| v / s).collect())
}

fn weighted_norm(r: impl Iterator<Item = f64>, w: &[f64]) -> f64 {
    r.zip(w).map(|(v, w)| w * v * v).sum::<f64>().sqrt()
}

/// `C, b` for fixed α, and the residual norm.
fn exp_profile(xs: &[f64], ys: &[f64], w: &[f64], alpha: f64) -> Option<(f64, f64, f64)> {
    let e: Vec<f64> = xs.iter().map(|x| (-alpha * x).exp()).collect();
    let beta = lstsq(&[e.clone(), vec![1.0; xs.len()]], ys, w).ok()?;
    let r = weighted_norm(xs.iter().enumerate().map(|(i, _)| ys[i] - beta[0] * e[i] - beta[1]), w);
    Some((beta[0], beta[1], r))
}

fn point_fit(xs: &[f64], ys: &[f64], w: &[f64], model: FitModel) -> Result<(Vec<f64>, f64)> {
    match model {
        FitModel::PowerLaw => {
            if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidInput("power-law fits need positive data".into()));
            }
            let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
            let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
            let beta = lstsq(&[vec![1.0; xs.len()], lx.clone()], &ly, w)?;
            let r = weighted_norm(lx.iter().zip(&ly).map(|(x, y)| y - beta[0] - beta[1] * x), w);
            Ok((vec![beta[0].exp(), beta[1]], r))
        }
        FitModel::Linear => {
            let beta = lstsq(&[xs.to_vec(), vec![1.0; xs.len()]], ys, w)?;
            let r = weighted_norm(xs.iter().zip(ys).map(|(x, y)| y - beta[0] * x - beta[1]), w);
            Ok((beta, r))
        }
        FitModel::Quadratic => {
            let beta = lstsq(&[xs.iter().map(|x| x * x).collect()], ys, w)?;
            let r = weighted_norm(xs.iter().zip(ys).map(|(x, y)| y - beta[0] * x * x), w);
            Ok((beta, r))
        }
        FitModel::Exponential => {
            // Scan the rate on a log grid spanning the data's x range, then
            // refine the best bracket by golden section.
            let span = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(span > 0.0) {
                return Err(Error::InvalidInput("exponential fit needs distinct x values".into()));
            }
            let grid: Vec<f64> = (0..=120).map(|k| 10f64.powf(-3.0 + 5.0 * k as f64 / 120.0) / span).collect();
            let prof: Vec<f64> = grid.iter().map(|&a| exp_profile(xs, ys, w, a).map_or(f64::INFINITY, |p| p.2)).collect();
            let k = (0..grid.len()).min_by(|&i, &j| prof[i].total_cmp(&prof[j])).expect("non-empty");
            if !prof[k].is_finite() {
                return Err(Error::Singular("exponential fit failed".into()));
            }
            let (mut lo, mut hi) = (grid[k.saturating_sub(1)].ln(), grid[(k + 1).min(grid.len() - 1)].ln());
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let f = |la: f64| exp_profile(xs, ys, w, la.exp()).map_or(f64::INFINITY, |p| p.2);
            for _ in 0..80 {
                let (a, b) = (hi - g * (hi - lo), lo + g * (hi - lo));
                if f(a) <= f(b) {
                    hi = b;
                } else {
                    lo = a;
                }
            }
            let alpha = (0.5 * (lo + hi)).exp();
            let (c, b, r) = exp_profile(xs, ys, w, alpha).ok_or_else(|| Error::Singular("exponential fit failed".into()))?;
            Ok((vec![c, alpha, b], r))
        }
    }
}

/// Unweighted point estimate only, for refits inside outer resampling loops.
pub(crate) fn fit_params(xs: &[f64], ys: &[f64], model: FitModel) -> Result<Vec<f64>> {
    if xs.len() != ys.len() || xs.len() < model.param_count() + 1 || xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("bad fit input".into()));
    }
    Ok(point_fit(xs, ys, &vec![1.0; xs.len()], model)?.0)
}

/// Fits `model` to the points, with 68% intervals from `resamples` bootstrap
/// draws of the points (draws with too few distinct x values are skipped).
pub fn fit_model(xs: &[f64], ys: &[f64], model: FitModel, weights: Option<&[f64]>, resamples: usize, seed: u64) -> Result<FitResult> {
    if xs.len() != ys.len() || weights.is_some_and(|w| w.len() != xs.len()) {
        return Err(Error::InvalidInput("fit inputs differ in length".into()));
    }
    let need = model.param_count() + 1;
    if xs.len() < need {
        return Err(Error::InvalidInput(format!("{model:?} fit needs at least {need} points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("fit inputs must be finite".into()));
    }
    let ones = vec![1.0; xs.len()];
    let w = weights.unwrap_or(&ones);
    let (params, residual) = point_fit(xs, ys, w, model)?;
    let mut rng = Stream::new(seed, BOOTSTRAP_STREAM + 1);
    let mut reps = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let idx = resample_indices(&mut rng, xs.len());
        let mut distinct: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < model.param_count() {
            continue;
        }
        let bx: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
        let by: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
        let bw: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
        if let Ok((p, _)) = point_fit(&bx, &by, &bw, model) {
            reps.push(p);
        }
    }
    let fit = FitResult { model, params: params.iter().map(|&v| Estimate::exact(v)).collect(), residual, points: xs.len() };
    Ok(fit.with_replicates(&reps))
}
