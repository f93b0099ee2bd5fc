//! Integrated survival/transfer times and trap mean first-passage times.
//!
//! `T_ij = ∫₀^∞ (ρ_jj(t) − ρ^ss_jj) dt` for `ρ(0) = |i⟩⟨i|`. The integrated
//! deviation `x = ∫(ρ − ρ^ss)dt` satisfies `𝓛x = ρ^ss − ρ(0)` with `Tr x = 0`,
//! so `T_ij = x_jj = −[𝓛⁺ρ(0)]_jj`, where `𝓛⁺` inverts 𝓛 on the complement
//! of the steady mode. Positive diagonal entries mean a site holds more than
//! its equilibrium share on average.
//!
//! Three independent routes are provided: a deflated linear solve (replace
//! one redundant population equation by the trace condition), the spectral
//! sum over nonzero modes, and, for uniform dephasing, an exact reduction to
//! a population-space Laplacian in the eigenbasis of H ([`DephasingResolvent`]).

use ndarray::Array2;

use crate::linalg;
use crate::liouvillian::{idx, Hamiltonian, LiouvillianOperator, Loss, SpectralDecomposition};
use crate::dynamics::DensityMatrix;
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransferRoute {
    Deflated,
    Spectral,
    Eigenbasis,
}

#[derive(Clone, Debug)]
pub struct TransferMatrix {
    /// Row = preparation site, column = observed site.
    pub values: Array2<f64>,
    /// Uniform dephasing rate, when all sites share one.
    pub gamma: Option<f64>,
    /// Largest imaginary part relative to the largest |T| (spectral route).
    pub imag_residue: f64,
    /// Reciprocal condition estimate of the pinned system (deflated route).
    pub rcond: Option<f64>,
    pub route: TransferRoute,
}

impl TransferMatrix {
    pub fn max_row_sum(&self) -> f64 {
        self.values.rows().into_iter().map(|r| r.sum().abs()).fold(0.0, f64::max)
    }
}

fn uniform_gamma(l: &LiouvillianOperator) -> Option<f64> {
    let g0 = *l.dephasing.first()?;
    l.dephasing.iter().all(|&g| g == g0).then_some(g0)
}

/// Reciprocal condition numbers below this make the deflated solve an error.
pub const MIN_RCOND: f64 = 1e-15;

/// Integrated population deviations for the given preparation sites.
///
/// Returns `out[s][j] = T_{sites[s], j}` and the condition estimate. The
/// steady state is the maximally mixed one, which is exact for loss-free
/// local dephasing on a connected network.
pub fn integrated_deviations(l: &LiouvillianOperator, sites: &[usize]) -> Result<(Vec<Vec<f64>>, f64)> {
    if l.loss.is_some() {
        return Err(Error::InvalidInput("transfer times need a loss-free generator".into()));
    }
    let n = l.n;
    if !l.hamiltonian.is_connected() && n > 1 {
        return Err(Error::ZeroModes { found: 2 });
    }
    let mut m = l.hermitian_real_form();
    let pin = idx(0, 0, n);
    m.row_mut(pin).fill(0.0);
    for a in 0..n {
        m[[pin, idx(a, a, n)]] = 1.0;
    }
    let lu = linalg::factorize(m).map_err(|e| match e {
        Error::Singular(_) => Error::ZeroModes { found: 2 },
        other => other,
    })?;
    if lu.rcond < MIN_RCOND {
        return Err(Error::Numerical { what: "pinned transfer system is ill-conditioned".into(), residual: lu.rcond });
    }
    let mut out = Vec::with_capacity(sites.len());
    let mut rhs = vec![0.0; n * n];
    for &s in sites {
        if s >= n {
            return Err(Error::InvalidInput(format!("site {s} out of range")));
        }
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for a in 0..n {
            rhs[idx(a, a, n)] = 1.0 / n as f64;
        }
        rhs[idx(s, s, n)] -= 1.0;
        rhs[pin] = 0.0;
        lu.solve(&mut rhs)?;
        out.push((0..n).map(|j| rhs[idx(j, j, n)]).collect());
    }
    Ok((out, lu.rcond))
}

/// Full `T` by the deflated linear solve.
pub fn transfer_matrix(l: &LiouvillianOperator) -> Result<TransferMatrix> {
    let n = l.n;
    let sites: Vec<usize> = (0..n).collect();
    let (rows, rcond) = integrated_deviations(l, &sites)?;
    let values = Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]);
    Ok(TransferMatrix { values, gamma: uniform_gamma(l), imag_residue: 0.0, rcond: Some(rcond), route: TransferRoute::Deflated })
}

/// Full `T` by summing over the nonzero Liouvillian modes:
/// `T_ij = −Σ_{k≠0} R_k[jj] ⟨L_k|ρ_i⟩ / λ_k`.
pub fn transfer_matrix_spectral(spec: &SpectralDecomposition, gamma: Option<f64>) -> Result<TransferMatrix> {
    if spec.zero_mode_count != 1 {
        return Err(Error::ZeroModes { found: spec.zero_mode_count });
    }
    let z = spec.zero_mode_index.expect("one zero mode");
    let n = spec.n;
    let mut t = Array2::<C64>::zeros((n, n));
    for k in 0..n * n {
        if k == z {
            continue;
        }
        let lam = spec.eigenvalues[k];
        for i in 0..n {
            let c = spec.left_modes[[k, idx(i, i, n)]] / lam;
            for j in 0..n {
                t[[i, j]] -= spec.right_modes[[idx(j, j, n), k]] * c;
            }
        }
    }
    let max_re = t.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    let max_im = t.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let imag_residue = if max_re > 0.0 { max_im / max_re } else { max_im };
    Ok(TransferMatrix {
        values: t.mapv(|v| v.re),
        gamma,
        imag_residue,
        rcond: None,
        route: TransferRoute::Spectral,
    })
}

/// Uniform-dephasing transfer times through the eigenbasis of `H`.
///
/// With uniform Γ and no loss, `𝓛x = −i[H,x] − Γx + Γ·diag(x)`. For
/// `H = U diag(E) Uᵀ` the first two terms are diagonal in the eigenbasis with
/// factor `−iω_αβ − Γ`, `ω_αβ = E_α − E_β`, so the coherences can be
/// eliminated exactly. For a diagonal right-hand side `r` with `Σr = 0`, the
/// populations `p = diag(x)` of the trace-free solution of `𝓛x = r` are
///
/// `p = (r − y)/Γ`, with `A y = r`, `Σy = 0`,
///
/// where `A` is the graph Laplacian of the symmetric weights
/// `w_jk = Σ_αβ f_αβ x_α x_β`, `x_α = U_jα U_kα`, `f_αβ = Γ²/(ω_αβ² + Γ²)`.
/// Since `Σ_αβ x_α x_β = 0` for `j ≠ k`, also `w_jk = −Σ_αβ (1 − f_αβ) x_α x_β`;
/// each weight is evaluated in whichever form has the smaller absolute
/// term sum. The singular Laplacian is grounded at its best-connected node.
///
/// One symmetric eigendecomposition serves every Γ, and each Γ costs
/// `O(N⁴)` plus an `(N−1)²` solve instead of an `N²×N²` factorization.
#[derive(Clone, Debug)]
pub struct DephasingResolvent {
    n: usize,
    energies: Vec<f64>,
    /// `u[[j, α]]`: site `j` amplitude of eigenvector α.
    u: Array2<f64>,
}

impl DephasingResolvent {
    pub fn new(h: &Hamiltonian) -> Result<Self> {
        let n = h.n();
        if n > 1 && !h.is_connected() {
            return Err(Error::ZeroModes { found: 2 });
        }
        let (energies, u) = linalg::eigh(&h.matrix)?;
        Ok(DephasingResolvent { n, energies, u })
    }

    /// Population-space Laplacian `A` at dephasing `gamma`.
    pub fn laplacian(&self, gamma: f64) -> Array2<f64> {
        let n = self.n;
        let g2 = gamma * gamma;
        let w2 = Array2::from_shape_fn((n, n), |(a, b)| (self.energies[a] - self.energies[b]).powi(2));
        // Both f and 1 − f are formed without subtraction.
        let f = w2.mapv(|w| g2 / (w + g2));
        let fc = w2.mapv(|w| w / (w + g2));
        let mut a = Array2::<f64>::zeros((n, n));
        let mut x = vec![0.0; n];
        for j in 0..n {
            for k in 0..j {
                for (al, xa) in x.iter_mut().enumerate() {
                    *xa = self.u[[j, al]] * self.u[[k, al]];
                }
                let (mut near, mut near_abs, mut far, mut far_abs) = (0.0, 0.0, 0.0, 0.0);
                for al in 0..n {
                    let (mut s_near, mut s_near_abs, mut s_far, mut s_far_abs) = (0.0, 0.0, 0.0, 0.0);
                    for be in 0..n {
                        let (fab, fcab) = (f[[al, be]], fc[[al, be]]);
                        s_near += fab * x[be];
                        s_near_abs += fab * x[be].abs();
                        s_far += fcab * x[be];
                        s_far_abs += fcab * x[be].abs();
                    }
                    near += x[al] * s_near;
                    near_abs += x[al].abs() * s_near_abs;
                    far -= x[al] * s_far;
                    far_abs += x[al].abs() * s_far_abs;
                }
                let w = if near_abs <= far_abs { near } else { far };
                a[[j, k]] = -w;
                a[[k, j]] = -w;
            }
        }
        for j in 0..n {
            a[[j, j]] = -(0..n).filter(|&k| k != j).map(|k| a[[j, k]]).sum::<f64>();
        }
        a
    }

    /// `T_{s,j}` for each `s` in `sites`, plus the grounded Laplacian's
    /// reciprocal condition estimate.
    pub fn rows(&self, gamma: f64, sites: &[usize]) -> Result<(Vec<Vec<f64>>, f64)> {
        let n = self.n;
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!("Γ must be positive, got {gamma}")));
        }
        if let Some(&s) = sites.iter().find(|&&s| s >= n) {
            return Err(Error::InvalidInput(format!("site {s} out of range")));
        }
        if n == 1 {
            return Ok((vec![vec![0.0]; sites.len()], 1.0));
        }
        let a = self.laplacian(gamma);
        let ground = (0..n).max_by(|&p, &q| a[[p, p]].total_cmp(&a[[q, q]])).expect("n > 1");
        let keep: Vec<usize> = (0..n).filter(|&k| k != ground).collect();
        let reduced = Array2::from_shape_fn((n - 1, n - 1), |(p, q)| a[[keep[p], keep[q]]]);
        let lu = linalg::factorize(reduced).map_err(|e| match e {
            Error::Singular(_) => Error::ZeroModes { found: 2 },
            other => other,
        })?;
        let mut out = Vec::with_capacity(sites.len());
        for &s in sites {
            let r: Vec<f64> = (0..n).map(|k| 1.0 / n as f64 - if k == s { 1.0 } else { 0.0 }).collect();
            let mut z: Vec<f64> = keep.iter().map(|&k| r[k]).collect();
            lu.solve(&mut z)?;
            let mut y = vec![0.0; n];
            for (p, &k) in keep.iter().enumerate() {
                y[k] = z[p];
            }
            let mean = y.iter().sum::<f64>() / n as f64;
            out.push((0..n).map(|k| (r[k] - (y[k] - mean)) / gamma).collect());
        }
        Ok((out, lu.rcond))
    }

    pub fn transfer_matrix(&self, gamma: f64) -> Result<TransferMatrix> {
        let n = self.n;
        let sites: Vec<usize> = (0..n).collect();
        let (rows, rcond) = self.rows(gamma, &sites)?;
        let values = Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]);
        Ok(TransferMatrix { values, gamma: Some(gamma), imag_residue: 0.0, rcond: Some(rcond), route: TransferRoute::Eigenbasis })
    }

    /// Diagonal `T_ii` for all sites.
    pub fn survival(&self, gamma: f64) -> Result<Vec<f64>> {
        let sites: Vec<usize> = (0..self.n).collect();
        let (rows, _) = self.rows(gamma, &sites)?;
        Ok(rows.iter().enumerate().map(|(i, r)| r[i]).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalCurve {
    pub site: usize,
    pub gammas: Vec<f64>,
    pub t_ii: Vec<f64>,
    pub inv_t_ii: Vec<f64>,
    pub gamma_star: f64,
    pub t_min: f64,
}

/// `T_ii(Γ)` for every site at once; `out[g][i]`. Uses the eigenbasis route.
pub fn survival_table(h: &Hamiltonian, gammas: &[f64]) -> Result<Vec<Vec<f64>>> {
    let r = DephasingResolvent::new(h)?;
    gammas.iter().map(|&g| r.survival(g)).collect()
}

pub fn survival_curve(h: &Hamiltonian, site: usize, gammas: &[f64]) -> Result<SurvivalCurve> {
    if gammas.is_empty() || gammas.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::InvalidInput("Γ grid must be non-empty and positive".into()));
    }
    let r = DephasingResolvent::new(h)?;
    let mut t_ii = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let (rows, _) = r.rows(g, &[site])?;
        t_ii.push(rows[0][site]);
    }
    let (gamma_star, t_min) = log_parabolic_minimum(gammas, &t_ii);
    Ok(SurvivalCurve {
        site,
        gammas: gammas.to_vec(),
        inv_t_ii: t_ii.iter().map(|v| 1.0 / v).collect(),
        t_ii,
        gamma_star,
        t_min,
    })
}

/// Minimum of a positive curve sampled at increasing `xs`, refined by a
/// parabola through the discrete minimum and its neighbours in
/// (log x, log y). Falls back to the grid point at the ends or when the
/// parabola opens downward.
pub fn log_parabolic_minimum(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty());
    let k = (0..ys.len()).min_by(|&a, &b| ys[a].total_cmp(&ys[b])).expect("non-empty");
    if k == 0 || k + 1 == xs.len() || ys[k - 1..=k + 1].iter().any(|&v| !(v > 0.0)) {
        return (xs[k], ys[k]);
    }
    let (x0, x1, x2) = (xs[k - 1].ln(), xs[k].ln(), xs[k + 1].ln());
    let (y0, y1, y2) = (ys[k - 1].ln(), ys[k].ln(), ys[k + 1].ln());
    // Newton divided differences.
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if !(a > 0.0) {
        return (xs[k], ys[k]);
    }
    let b = d01 - a * (x0 + x1);
    let xm = (-b / (2.0 * a)).clamp(x0, x2);
    let ym = y0 + d01 * (xm - x0) + a * (xm - x0) * (xm - x1);
    (xm.exp(), ym.exp())
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct MfptResult {
    pub tau_total: f64,
    pub tau_site: Vec<f64>,
    pub trap_rate: f64,
}

/// Mean first-passage time into an absorbing trap: `τ_j = [(−𝓛)⁻¹ρ(0)]_jj`,
/// `τ_total = Σ_j τ_j`.
pub fn mfpt_with_trap(l: &LiouvillianOperator, rho0: &DensityMatrix) -> Result<MfptResult> {
    let Some(Loss::Absorbing { rate, .. }) = l.loss else {
        return Err(Error::InvalidInput("MFPT needs an absorbing loss channel".into()));
    };
    if !(rate > 0.0) {
        return Err(Error::InvalidInput("trap rate must be positive".into()));
    }
    let n = l.n;
    let m = l.hermitian_real_form();
    let lu = linalg::factorize(m).map_err(|e| match e {
        Error::Singular(_) => Error::ZeroModes { found: 1 },
        other => other,
    })?;
    if lu.rcond < MIN_RCOND {
        return Err(Error::ZeroModes { found: 1 });
    }
    let mut rhs: Vec<f64> = crate::liouvillian::to_real_form(&rho0.matrix).iter().map(|v| -v).collect();
    lu.solve(&mut rhs)?;
    let tau_site: Vec<f64> = (0..n).map(|j| rhs[idx(j, j, n)]).collect();
    let tau_total = tau_site.iter().sum();
    Ok(MfptResult { tau_total, tau_site, trap_rate: rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, EvolveOptions};
    use crate::liouvillian::{build_liouvillian, build_uniform, decompose, DecomposeOptions};
    use proptest::prelude::*;

    fn random_network(n: usize, seed: u64) -> (Hamiltonian, Vec<f64>) {
        let mut s = crate::rng::Stream::new(seed, 17);
        let mut m = Array2::zeros((n, n));
        for a in 0..n {
            for b in 0..a {
                let v = 10f64.powf(-2.0 * s.uniform());
                m[[a, b]] = v;
                m[[b, a]] = v;
            }
        }
        let gammas = (0..n).map(|_| 10f64.powf(-2.0 + 2.0 * s.uniform())).collect();
        (Hamiltonian::from_matrix(m).unwrap(), gammas)
    }

    #[test]
    fn two_site_closed_form() {
        let l = build_uniform(&Hamiltonian::homogeneous(2, 1.0), 1.0, None).unwrap();
        let t = transfer_matrix(&l).unwrap();
        assert!((t.values[[0, 0]] - 0.125).abs() < 1e-10);
        assert!((t.values[[0, 1]] + 0.125).abs() < 1e-10);
        // Γ/(8J²) more generally.
        let (j, g) = (0.3, 0.02);
        let l = build_uniform(&Hamiltonian::homogeneous(2, j), g, None).unwrap();
        let t = transfer_matrix(&l).unwrap();
        assert!((t.values[[1, 1]] / (g / (8.0 * j * j)) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn eigenbasis_route_two_site() {
        for (j, g) in [(1.0, 1.0), (0.3, 0.02), (1e-3, 10.0)] {
            let t = DephasingResolvent::new(&Hamiltonian::homogeneous(2, j)).unwrap().transfer_matrix(g).unwrap();
            let want = g / (8.0 * j * j);
            assert!((t.values[[0, 0]] / want - 1.0).abs() < 1e-10, "{} vs {want}", t.values[[0, 0]]);
            assert!((t.values[[0, 1]] / want + 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenbasis_route_handles_degenerate_spectrum() {
        // The homogeneous network has an (N−1)-fold degenerate level.
        let h = Hamiltonian::homogeneous(5, 0.2);
        let a = DephasingResolvent::new(&h).unwrap().transfer_matrix(0.05).unwrap();
        let b = transfer_matrix(&build_uniform(&h, 0.05, None).unwrap()).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert!((x - y).abs() < 1e-9 * b.values[[0, 0]]);
        }
    }

    #[test]
    fn single_site_has_no_transfer() {
        let h = Hamiltonian::from_matrix(Array2::zeros((1, 1))).unwrap();
        assert_eq!(DephasingResolvent::new(&h).unwrap().survival(0.1).unwrap(), vec![0.0]);
    }

    #[test]
    fn eigenbasis_disconnected_is_rejected() {
        let mut m = Array2::zeros((3, 3));
        m[[0, 1]] = 1.0;
        m[[1, 0]] = 1.0;
        assert!(matches!(DephasingResolvent::new(&Hamiltonian::from_matrix(m).unwrap()), Err(Error::ZeroModes { .. })));
    }

    #[test]
    fn spectral_route_two_site() {
        let l = build_uniform(&Hamiltonian::homogeneous(2, 1.0), 1.0, None).unwrap();
        let s = decompose(&l, &DecomposeOptions::default()).unwrap();
        let t = transfer_matrix_spectral(&s, Some(1.0)).unwrap();
        assert!((t.values[[0, 0]] - 0.125).abs() < 1e-10);
        assert!(t.imag_residue < 1e-8);
    }

    #[test]
    fn disconnected_network_is_rejected() {
        let mut m = Array2::zeros((3, 3));
        m[[0, 1]] = 1.0;
        m[[1, 0]] = 1.0;
        let l = build_uniform(&Hamiltonian::from_matrix(m).unwrap(), 0.1, None).unwrap();
        assert!(matches!(transfer_matrix(&l), Err(Error::ZeroModes { .. })));
    }

    #[test]
    fn loss_is_rejected_for_transfer() {
        let l = build_uniform(&Hamiltonian::homogeneous(2, 1.0), 1.0, Some(Loss::Absorbing { sink: 1, rate: 0.1 })).unwrap();
        assert!(transfer_matrix(&l).is_err());
    }

    #[test]
    fn parabola_recovers_vertex() {
        let xs: Vec<f64> = (0..9).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect();
        // log y = (log x − log 3e-3)² + 2
        let ys: Vec<f64> = xs.iter().map(|x: &f64| ((x.ln() - 3e-3f64.ln()).powi(2) + 2.0).exp()).collect();
        let (xm, ym) = log_parabolic_minimum(&xs, &ys);
        assert!((xm / 3e-3 - 1.0).abs() < 1e-10);
        assert!((ym / 2f64.exp() - 1.0).abs() < 1e-10);
        // Edge minimum stays on the grid.
        let mono: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
        assert_eq!(log_parabolic_minimum(&xs, &mono).0, xs[8]);
    }

    #[test]
    fn trap_on_prepared_site() {
        let h = Hamiltonian::from_matrix(Array2::zeros((1, 1))).unwrap();
        let l = build_uniform(&h, 0.3, Some(Loss::Absorbing { sink: 0, rate: 0.25 })).unwrap();
        let r = mfpt_with_trap(&l, &DensityMatrix::pure_site(1, 0)).unwrap();
        assert!((r.tau_total - 4.0).abs() < 1e-12);
        // An uncoupled site is never drained.
        let h = Hamiltonian::from_matrix(Array2::zeros((2, 2))).unwrap();
        let l = build_uniform(&h, 0.3, Some(Loss::Absorbing { sink: 0, rate: 0.25 })).unwrap();
        assert!(mfpt_with_trap(&l, &DensityMatrix::pure_site(2, 1)).is_err());
    }

    #[test]
    fn mfpt_matches_survival_quadrature() {
        for seed in 0..3 {
            let (h, gammas) = random_network(4, seed);
            let l = build_liouvillian(&h, &gammas, Some(Loss::Absorbing { sink: 3, rate: 0.2 })).unwrap();
            let rho0 = DensityMatrix::pure_site(4, 0);
            let r = mfpt_with_trap(&l, &rho0).unwrap();
            let mut times = vec![0.0];
            times.extend(crate::dynamics::log_times(1e-4, 80.0 * r.tau_total, 6000));
            let tr = evolve(&l, &rho0, &times, &EvolveOptions::default()).unwrap();
            let survival: Vec<f64> = tr.populations.iter().map(|p| p.iter().sum()).collect();
            let q: f64 = (1..times.len()).map(|k| 0.5 * (survival[k] + survival[k - 1]) * (times[k] - times[k - 1])).sum();
            assert!((q / r.tau_total - 1.0).abs() < 1e-5, "seed {seed}: {q} vs {}", r.tau_total);
        }
    }

    #[test]
    fn negative_area_for_depleted_site() {
        // Prepared on 0: site 1 never exceeds 1/2, so T_01 < 0.
        let l = build_uniform(&Hamiltonian::homogeneous(2, 0.4), 2.0, None).unwrap();
        let tr = evolve(&l, &DensityMatrix::pure_site(2, 0), &crate::dynamics::log_times(1e-3, 1e3, 200), &EvolveOptions::default()).unwrap();
        assert!(tr.populations.iter().all(|p| p[1] < 0.5 + 1e-14));
        assert!(transfer_matrix(&l).unwrap().values[[0, 1]] < 0.0);
    }

    /// Trapezoid quadrature of ∫(ρ_jj − 1/N) over a log grid plus the
    /// initial linear segment.
    fn quadrature(l: &LiouvillianOperator, site: usize, t_end: f64) -> Vec<f64> {
        let n = l.n;
        let mut times = vec![0.0];
        times.extend(crate::dynamics::log_times(1e-4, t_end, 24000));
        let tr = evolve(l, &DensityMatrix::pure_site(n, site), &times, &EvolveOptions::default()).unwrap();
        (0..n)
            .map(|j| {
                (1..times.len())
                    .map(|k| {
                        let f0 = tr.populations[k - 1][j] - 1.0 / n as f64;
                        let f1 = tr.populations[k][j] - 1.0 / n as f64;
                        0.5 * (f0 + f1) * (times[k] - times[k - 1])
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn time_quadrature_oracle() {
        for seed in 0..4 {
            let (h, gammas) = random_network(4, seed);
            let l = build_liouvillian(&h, &gammas, None).unwrap();
            let t = transfer_matrix(&l).unwrap();
            let s = decompose(&l, &DecomposeOptions::default()).unwrap();
            let slowest = s.eigenvalues.iter().filter(|v| v.norm() > s.zero_tolerance).map(|v| -v.re).fold(f64::INFINITY, f64::min);
            let q = quadrature(&l, 1, 60.0 / slowest);
            for j in 0..4 {
                let rel = (q[j] - t.values[[1, j]]).abs() / t.values[[1, 1]].abs();
                assert!(rel < 1e-6, "seed {seed} j {j}: {} vs {}", q[j], t.values[[1, j]]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn routes_agree_and_rows_vanish(n in 2usize..=7, seed in any::<u64>()) {
            let (h, gammas) = random_network(n, seed);
            let l = build_liouvillian(&h, &gammas, None).unwrap();
            let a = transfer_matrix(&l).unwrap();
            let s = decompose(&l, &DecomposeOptions::default()).unwrap();
            let b = transfer_matrix_spectral(&s, None).unwrap();
            let scale = a.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
            prop_assert!(a.max_row_sum() <= 1e-8 * scale);
            prop_assert!(b.imag_residue < 1e-8);
            for (x, y) in a.values.iter().zip(b.values.iter()) {
                prop_assert!((x - y).abs() <= 1e-8 * scale, "{} vs {}", x, y);
            }
            for i in 0..n {
                prop_assert!(a.values[[i, i]] > 0.0);
            }
        }
    
        #[test]
        fn eigenbasis_matches_deflated(n in 2usize..=8, seed in any::<u64>(), lg in -3.0f64..1.0) {
            let (h, _) = random_network(n, seed);
            let gamma = 10f64.powf(lg);
            let a = transfer_matrix(&build_uniform(&h, gamma, None).unwrap()).unwrap();
            let b = DephasingResolvent::new(&h).unwrap().transfer_matrix(gamma).unwrap();
            let scale = a.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
            prop_assert!(b.max_row_sum() <= 1e-10 * scale);
            for (x, y) in a.values.iter().zip(b.values.iter()) {
                prop_assert!((x - y).abs() <= 1e-8 * scale, "{} vs {}", x, y);
            }
        }
    }
}
