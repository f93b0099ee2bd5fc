//! Nonequilibrium steady state under recycling injection/extraction.
//!
//! Population leaves the extraction site `m` at rate `γ_l` and re-enters at
//! the injection site `n` (jump operator `√γ_l |n⟩⟨m|`). The steady state
//! solves `𝓛ρ = 0` with the population row of `n` replaced by the trace
//! condition. The flux is `η = γ_l ρ_mm`, and the probability current from
//! site `a` into site `b` is `F_ab = 2 H_ba Im ρ_ab`.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::DensityMatrix;
use crate::linalg;
use crate::liouvillian::{build_liouvillian, idx, matricize, Hamiltonian, LiouvillianOperator, Loss};
use crate::measures::log_parabolic_minimum;
use crate::{Error, Result, C64};

#[derive(Clone, Debug)]
pub struct NessProblem {
    pub l: LiouvillianOperator,
    pub inject: usize,
    pub extract: usize,
}

impl NessProblem {
    pub fn new(h: &Hamiltonian, gammas: &[f64], inject: usize, extract: usize, gamma_l: f64) -> Result<Self> {
        let n = h.n();
        if inject >= n || extract >= n {
            return Err(Error::InvalidInput(format!("terminal sites ({inject}, {extract}) outside 0..{n}")));
        }
        if inject == extract {
            return Err(Error::InvalidInput("injection and extraction sites coincide".into()));
        }
        if !(gamma_l > 0.0) || !gamma_l.is_finite() {
            return Err(Error::InvalidInput(format!("γ_l must be positive, got {gamma_l}")));
        }
        let loss = Loss::Recycling { source: inject, sink: extract, rate: gamma_l };
        Ok(NessProblem { l: build_liouvillian(h, gammas, Some(loss))?, inject, extract })
    }

    pub fn uniform(h: &Hamiltonian, gamma: f64, inject: usize, extract: usize, gamma_l: f64) -> Result<Self> {
        Self::new(h, &vec![gamma; h.n()], inject, extract, gamma_l)
    }

    pub fn gamma_l(&self) -> f64 {
        self.l.loss.map(|l| l.rate()).unwrap_or(0.0)
    }
}

#[derive(Clone, Debug)]
pub struct NessResult {
    pub rho: DensityMatrix,
    pub eta: f64,
    /// `currents[[a, b]]`: current from `a` into `b`.
    pub currents: Array2<f64>,
    pub inject: usize,
    pub extract: usize,
    /// `max |𝓛ρ|` over the rows kept in the pinned system, relative to `‖𝓛‖`.
    pub residual: f64,
    /// The equation hidden by pinning, relative to `‖𝓛‖`.
    pub pinned_row_residual: f64,
    pub rcond: f64,
    /// Largest `|Σ_k F_ks|` over non-terminal sites.
    pub kirchhoff_error: f64,
    /// `|Σ_k F_km − η|` at the extraction site.
    pub extract_balance_error: f64,
}

pub fn solve_ness(p: &NessProblem) -> Result<NessResult> {
    let n = p.l.n;
    let dim = n * n;
    let gamma_l = p.gamma_l();
    let pin = idx(p.inject, p.inject, n);
    let mut a = p.l.matrix.to_dense();
    a.row_mut(pin).fill(C64::new(0.0, 0.0));
    for s in 0..n {
        a[[pin, idx(s, s, n)]] = C64::new(1.0, 0.0);
    }
    let lu = linalg::factorize(a).map_err(|e| match e {
        Error::Singular(msg) => Error::Singular(format!("pinned NESS system: {msg}")),
        other => other,
    })?;
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[pin] = C64::new(1.0, 0.0);
    lu.solve(&mut v)?;

    let lv = p.l.matrix.apply(&v);
    let scale = p.l.norm().max(f64::MIN_POSITIVE);
    let residual = (0..dim).filter(|&r| r != pin).map(|r| lv[r].norm()).fold(0.0, f64::max) / scale;
    let pinned_row_residual = lv[pin].norm() / scale;

    let mut rho = matricize(&v, n);
    // Symmetrize away rounding-level anti-Hermitian parts.
    let herm = (&rho + &rho.t().mapv(|z| z.conj())).mapv(|z| z * 0.5);
    rho = herm;
    let eta = gamma_l * rho[[p.extract, p.extract]].re;
    let currents = probability_currents(&p.l.hamiltonian, &rho);

    let mut kirchhoff_error = 0.0f64;
    for s in 0..n {
        if s == p.inject || s == p.extract {
            continue;
        }
        let inflow: f64 = (0..n).map(|k| currents[[k, s]]).sum();
        kirchhoff_error = kirchhoff_error.max(inflow.abs());
    }
    let into_extract: f64 = (0..n).map(|k| currents[[k, p.extract]]).sum();
    Ok(NessResult {
        rho: DensityMatrix { matrix: rho },
        eta,
        currents,
        inject: p.inject,
        extract: p.extract,
        residual,
        pinned_row_residual,
        rcond: lu.rcond,
        kirchhoff_error,
        extract_balance_error: (into_extract - eta).abs(),
    })
}

/// `F[[a, b]] = 2 H_ba Im ρ_ab`: net coherent flow from `a` into `b`.
pub fn probability_currents(h: &Hamiltonian, rho: &Array2<C64>) -> Array2<f64> {
    let n = h.n();
    Array2::from_shape_fn((n, n), |(a, b)| if a == b { 0.0 } else { 2.0 * h.matrix[[b, a]] * rho[[a, b]].im })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Peak {
    pub index: usize,
    pub gamma: f64,
    pub eta: f64,
    /// Vertex of the log-log parabola through the peak and its neighbours.
    pub gamma_refined: f64,
    pub prominence: f64,
}

/// Interior local maxima of `ys(xs)` whose topographic prominence is at
/// least `min_prominence_fraction` of the global maximum.
pub fn find_peaks(xs: &[f64], ys: &[f64], min_prominence_fraction: f64) -> Vec<Peak> {
    assert_eq!(xs.len(), ys.len());
    let len = ys.len();
    let global = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut peaks = Vec::new();
    if len < 3 || !(global > 0.0) {
        return peaks;
    }
    for k in 1..len - 1 {
        // Plateaus count once, at their left edge.
        if !(ys[k] > ys[k - 1] && ys[k] >= ys[k + 1]) {
            continue;
        }
        let mut left_min = ys[k];
        for j in (0..k).rev() {
            if ys[j] > ys[k] {
                break;
            }
            left_min = left_min.min(ys[j]);
        }
        let mut right_min = ys[k];
        for &y in &ys[k + 1..] {
            if y > ys[k] {
                break;
            }
            right_min = right_min.min(y);
        }
        let prominence = ys[k] - left_min.max(right_min);
        if prominence < min_prominence_fraction * global {
            continue;
        }
        let inv: Vec<f64> = ys[k - 1..=k + 1].iter().map(|y| 1.0 / y).collect();
        let refined = if inv.iter().all(|v| v.is_finite() && *v > 0.0) {
            log_parabolic_minimum(&xs[k - 1..=k + 1], &inv).0
        } else {
            xs[k]
        };
        peaks.push(Peak { index: k, gamma: xs[k], eta: ys[k], gamma_refined: refined, prominence });
    }
    peaks
}

/// Default prominence filter for η(Γ) peaks.
pub const PEAK_PROMINENCE: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct FluxSweep {
    pub gammas: Vec<f64>,
    pub gamma_ls: Vec<f64>,
    /// `eta[l][g]` for `gamma_ls[l]`, `gammas[g]`.
    pub eta: Vec<Vec<f64>>,
    pub peaks: Vec<Vec<Peak>>,
    /// Worst continuity violation over the sweep, relative to η.
    pub max_relative_kirchhoff: f64,
}

pub fn flux_sweep(h: &Hamiltonian, inject: usize, extract: usize, gammas: &[f64], gamma_ls: &[f64]) -> Result<FluxSweep> {
    if gammas.is_empty() || gamma_ls.is_empty() || gammas.iter().chain(gamma_ls).any(|&g| !(g > 0.0)) {
        return Err(Error::InvalidInput("Γ and γ_l grids must be non-empty and positive".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..gamma_ls.len()).flat_map(|l| (0..gammas.len()).map(move |g| (l, g))).collect();
    let solved: Vec<Result<(f64, f64)>> = tasks
        .par_iter()
        .map(|&(l, g)| {
            let r = solve_ness(&NessProblem::uniform(h, gammas[g], inject, extract, gamma_ls[l])?)?;
            let rel = if r.eta > 0.0 { r.kirchhoff_error.max(r.extract_balance_error) / r.eta } else { 0.0 };
            Ok((r.eta, rel))
        })
        .collect();
    let mut eta = vec![vec![0.0; gammas.len()]; gamma_ls.len()];
    let mut worst = 0.0f64;
    for (&(l, g), r) in tasks.iter().zip(solved) {
        let (e, rel) = r?;
        eta[l][g] = e;
        worst = worst.max(rel);
    }
    let peaks = eta.iter().map(|row| find_peaks(gammas, row, PEAK_PROMINENCE)).collect();
    Ok(FluxSweep { gammas: gammas.to_vec(), gamma_ls: gamma_ls.to_vec(), eta, peaks, max_relative_kirchhoff: worst })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub current: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pathway {
    /// Edges reachable from the injection site come first, in breadth-first
    /// order along the flow; the rest follow by decreasing current.
    pub edges: Vec<Edge>,
    /// Site sequence when the edges form one simple chain inject → extract.
    pub chain: Option<Vec<usize>>,
    pub branching: bool,
}

/// Edges carrying at least `threshold·max|F|`, oriented along the flow.
pub fn dominant_pathway(result: &NessResult, threshold: f64) -> Pathway {
    let f = &result.currents;
    let n = f.nrows();
    let fmax = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut strong = Vec::new();
    if fmax > 0.0 {
        for a in 0..n {
            for b in 0..n {
                if f[[a, b]] > 0.0 && f[[a, b]] >= threshold * fmax {
                    strong.push(Edge { from: a, to: b, current: f[[a, b]] });
                }
            }
        }
    }
    strong.sort_by(|x, y| y.current.total_cmp(&x.current).then(x.from.cmp(&y.from)).then(x.to.cmp(&y.to)));

    let mut out_deg = vec![0usize; n];
    let mut in_deg = vec![0usize; n];
    for e in &strong {
        out_deg[e.from] += 1;
        in_deg[e.to] += 1;
    }
    let branching = out_deg.iter().chain(&in_deg).any(|&d| d > 1);

    let mut ordered = Vec::with_capacity(strong.len());
    let mut used = vec![false; strong.len()];
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([result.inject]);
    seen[result.inject] = true;
    while let Some(s) = queue.pop_front() {
        for (k, e) in strong.iter().enumerate() {
            if !used[k] && e.from == s {
                used[k] = true;
                ordered.push(*e);
                if !seen[e.to] {
                    seen[e.to] = true;
                    queue.push_back(e.to);
                }
            }
        }
    }
    ordered.extend(strong.iter().enumerate().filter(|(k, _)| !used[*k]).map(|(_, e)| *e));

    let chain = if branching || ordered.is_empty() {
        None
    } else {
        let mut path = vec![result.inject];
        let mut at = result.inject;
        while let Some(e) = ordered.iter().find(|e| e.from == at) {
            at = e.to;
            path.push(at);
            if path.len() > n {
                break;
            }
        }
        (at == result.extract && path.len() == ordered.len() + 1).then_some(path)
    };
    Pathway { edges: ordered, chain, branching }
}
