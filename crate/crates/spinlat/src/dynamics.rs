//! Density-matrix trajectories, populations and purity.
//!
//! The default propagator expands the initial state in Liouvillian
//! eigenmodes, so one decomposition serves every output time. This matters
//! because the interesting times span ten or more decades. A classical RK4
//! stepper is kept as an independent check and as a fallback when the
//! decomposition is unusable.

use ndarray::Array2;

use crate::liouvillian::{decompose, idx, vectorize, DecomposeOptions, LiouvillianOperator, SpectralDecomposition};
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub matrix: Array2<C64>,
}

impl DensityMatrix {
    /// `|site⟩⟨site|`.
    pub fn pure_site(n: usize, site: usize) -> Self {
        let mut m = Array2::zeros((n, n));
        m[[site, site]] = C64::new(1.0, 0.0);
        DensityMatrix { matrix: m }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        DensityMatrix { matrix: Array2::from_diag_elem(n, C64::new(1.0 / n as f64, 0.0)) }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diag().sum()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.n();
        let mut e = 0.0f64;
        for a in 0..n {
            for b in 0..=a {
                e = e.max((self.matrix[[a, b]] - self.matrix[[b, a]].conj()).norm());
            }
        }
        e
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let h = (&self.matrix + &self.matrix.t().mapv(|v| v.conj())) * C64::new(0.5, 0.0);
        let ev = crate::linalg::eigvalsh(&h)?;
        Ok(ev.iter().cloned().fold(f64::INFINITY, f64::min))
    }

    pub fn validate(&self) -> Result<()> {
        if self.hermiticity_error() > 1e-10 {
            return Err(Error::InvalidInput("density matrix is not Hermitian".into()));
        }
        if (self.trace() - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::InvalidInput("density matrix trace differs from 1".into()));
        }
        if self.min_eigenvalue()? < -1e-8 {
            return Err(Error::InvalidInput("density matrix has a negative eigenvalue".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `populations[k][j] = ρ_jj(t_k)`.
    pub populations: Vec<Vec<f64>>,
    pub purity: Vec<f64>,
    pub states: Option<Vec<Array2<C64>>>,
    pub method: Method,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Spectral,
    Rk4,
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub method: Method,
    /// Keep full density matrices, not just populations and purity.
    pub store_states: bool,
    /// Fall back to RK4 when the eigendecomposition is unusable.
    pub allow_fallback: bool,
    /// Spectral path is rejected above this residual relative to ‖𝓛‖.
    pub max_relative_residual: f64,
    /// RK4 step size as a fraction of 1/‖𝓛‖.
    pub rk4_step_fraction: f64,
    /// RK4 refuses to take more steps than this.
    pub rk4_max_steps: u64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            method: Method::Spectral,
            store_states: false,
            allow_fallback: true,
            max_relative_residual: 1e-8,
            rk4_step_fraction: 0.05,
            rk4_max_steps: 50_000_000,
        }
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || !(times[0] >= 0.0) {
        return Err(Error::InvalidInput("time grid must be non-empty and start at t ≥ 0".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("time grid must be strictly increasing".into()));
    }
    Ok(())
}

pub fn evolve(l: &LiouvillianOperator, rho0: &DensityMatrix, times: &[f64], opts: &EvolveOptions) -> Result<Trajectory> {
    check_times(times)?;
    if rho0.n() != l.n {
        return Err(Error::InvalidInput("state and generator sizes differ".into()));
    }
    rho0.validate()?;
    match opts.method {
        Method::Rk4 => evolve_rk4(l, rho0, times, opts),
        Method::Spectral => {
            let spec = decompose(l, &DecomposeOptions { allow_multiple_zero_modes: true });
            match spec {
                Ok(s) if s.residual <= opts.max_relative_residual * l.norm().max(f64::MIN_POSITIVE) => {
                    let traj = evolve_spectral(&s, rho0, times, opts.store_states);
                    // A nearly defective eigenbasis shows up as trace drift.
                    let drift = if conserves_trace(l) { trace_drift(&traj) } else { 0.0 };
                    if drift <= TRACE_TOLERANCE {
                        Ok(traj)
                    } else if opts.allow_fallback {
                        evolve_rk4(l, rho0, times, opts)
                    } else {
                        Err(Error::Numerical { what: "spectral propagation lost trace".into(), residual: drift })
                    }
                }
                Ok(_) if opts.allow_fallback => evolve_rk4(l, rho0, times, opts),
                Ok(s) => Err(Error::Numerical { what: "eigendecomposition".into(), residual: s.residual }),
                Err(_) if opts.allow_fallback => evolve_rk4(l, rho0, times, opts),
                Err(e) => Err(e),
            }
        }
    }
}

const TRACE_TOLERANCE: f64 = 1e-8;

fn conserves_trace(l: &LiouvillianOperator) -> bool {
    !matches!(l.loss, Some(crate::liouvillian::Loss::Absorbing { .. }))
}

/// Largest `|Σ_j P_j(t) − 1|` over the stored times.
pub fn trace_drift(traj: &Trajectory) -> f64 {
    traj.populations.iter().map(|p| (p.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
}

/// Propagate with an existing decomposition: `ρ(t) = Σ_k c_k e^{λ_k t} R_k`.
pub fn evolve_spectral(spec: &SpectralDecomposition, rho0: &DensityMatrix, times: &[f64], store_states: bool) -> Trajectory {
    let n = spec.n;
    let v0 = vectorize(&rho0.matrix);
    let coeffs = spec.left_modes.dot(&ndarray::Array1::from(v0));
    let dim = n * n;
    let mut traj = Trajectory {
        times: times.to_vec(),
        populations: Vec::with_capacity(times.len()),
        purity: Vec::with_capacity(times.len()),
        states: store_states.then(Vec::new),
        method: Method::Spectral,
    };
    for &t in times {
        let w: Vec<C64> = (0..dim).map(|k| coeffs[k] * (spec.eigenvalues[k] * t).exp()).collect();
        let v = spec.right_modes.dot(&ndarray::Array1::from(w));
        record(&mut traj, v.as_slice().expect("contiguous"), n);
    }
    traj
}

fn record(traj: &mut Trajectory, v: &[C64], n: usize) {
    traj.populations.push((0..n).map(|j| v[idx(j, j, n)].re).collect());
    traj.purity.push(v.iter().map(|z| z.norm_sqr()).sum());
    if let Some(states) = traj.states.as_mut() {
        states.push(crate::liouvillian::matricize(v, n));
    }
}

fn evolve_rk4(l: &LiouvillianOperator, rho0: &DensityMatrix, times: &[f64], opts: &EvolveOptions) -> Result<Trajectory> {
    let n = l.n;
    let norm = l.norm();
    let h_max = if norm > 0.0 { opts.rk4_step_fraction / norm } else { f64::INFINITY };
    let mut traj = Trajectory {
        times: times.to_vec(),
        populations: Vec::with_capacity(times.len()),
        purity: Vec::with_capacity(times.len()),
        states: opts.store_states.then(Vec::new),
        method: Method::Rk4,
    };
    let total_steps: f64 = if h_max.is_finite() { (times[times.len() - 1] / h_max).ceil() } else { 0.0 };
    if total_steps > opts.rk4_max_steps as f64 {
        return Err(Error::Numerical {
            what: format!("RK4 would need {total_steps:.3e} steps"),
            residual: f64::NAN,
        });
    }
    let mut v = vectorize(&rho0.matrix);
    let mut t = 0.0;
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let steps = if h_max.is_finite() { (span / h_max).ceil().max(1.0) as u64 } else { 1 };
            let h = span / steps as f64;
            for _ in 0..steps {
                v = rk4_step(l, &v, h);
            }
            t = target;
        }
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical { what: "RK4 diverged".into(), residual: f64::INFINITY });
        }
        record(&mut traj, &v, n);
    }
    Ok(traj)
}

fn rk4_step(l: &LiouvillianOperator, v: &[C64], h: f64) -> Vec<C64> {
    let axpy = |x: &[C64], k: &[C64], s: f64| -> Vec<C64> { x.iter().zip(k).map(|(a, b)| a + b * s).collect() };
    let k1 = l.matrix.apply(v);
    let k2 = l.matrix.apply(&axpy(v, &k1, h / 2.0));
    let k3 = l.matrix.apply(&axpy(v, &k2, h / 2.0));
    let k4 = l.matrix.apply(&axpy(v, &k3, h));
    (0..v.len())
        .map(|i| v[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0))
        .collect()
}

/// `count` times spaced evenly in log10 between `t0` and `t1`.
pub fn log_times(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    assert!(t0 > 0.0 && t1 > t0 && count >= 2);
    let (a, b) = (t0.log10(), t1.log10());
    (0..count).map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlateauReport {
    pub populations: Vec<f64>,
    pub purity: f64,
    /// Largest relative deviation from the window mean, over purity and
    /// every site holding at least 10⁻³ of the population.
    pub flatness: f64,
    pub samples: usize,
}

/// Averages the stored samples falling in `[t0, t1]`. On a log grid this is
/// an average in log time, which is what a plateau on a log plot means.
pub fn plateau_report(traj: &Trajectory, window: (f64, f64)) -> Result<PlateauReport> {
    let ks: Vec<usize> = (0..traj.times.len())
        .filter(|&k| traj.times[k] >= window.0 && traj.times[k] <= window.1)
        .collect();
    if ks.is_empty() {
        return Err(Error::InvalidInput("plateau window contains no samples".into()));
    }
    let n = traj.populations[0].len();
    let m = ks.len() as f64;
    let populations: Vec<f64> = (0..n).map(|j| ks.iter().map(|&k| traj.populations[k][j]).sum::<f64>() / m).collect();
    let purity = ks.iter().map(|&k| traj.purity[k]).sum::<f64>() / m;
    let mut flatness = ks.iter().map(|&k| (traj.purity[k] - purity).abs() / purity).fold(0.0, f64::max);
    for j in 0..n {
        if populations[j] >= 1e-3 {
            for &k in &ks {
                flatness = flatness.max((traj.populations[k][j] - populations[j]).abs() / populations[j]);
            }
        }
    }
    Ok(PlateauReport { populations, purity, flatness, samples: ks.len() })
}

/// Last time at which `|P_site(t) − target|` exceeds `e⁻¹·|P_site(0) − target|`,
/// i.e. the time after which the population stays within the 1−1/e band.
/// `None` if it never settles on the grid.
pub fn settling_time(traj: &Trajectory, site: usize, target: f64, p0: f64) -> Option<f64> {
    let thr = (-1.0f64).exp() * (p0 - target).abs();
    let last_out = (0..traj.times.len()).rev().find(|&k| (traj.populations[k][site] - target).abs() > thr);
    match last_out {
        None => Some(traj.times[0]),
        Some(k) if k + 1 < traj.times.len() => Some(traj.times[k + 1]),
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouvillian::{build_liouvillian, build_uniform, Hamiltonian};
    use proptest::prelude::*;

    #[test]
    fn two_site_closed_form() {
        let (j, g) = (1.0f64, 0.1f64);
        let l = build_uniform(&Hamiltonian::homogeneous(2, j), g, None).unwrap();
        let times: Vec<f64> = (1..200).map(|k| 0.37 * k as f64).collect();
        let tr = evolve(&l, &DensityMatrix::pure_site(2, 0), &times, &EvolveOptions::default()).unwrap();
        assert_eq!(tr.method, Method::Spectral);
        let w = (4.0 * j * j - g * g / 4.0).sqrt();
        for (k, &t) in times.iter().enumerate() {
            let p0 = 0.5 + 0.5 * (-g * t / 2.0).exp() * ((w * t).cos() + g / (2.0 * w) * (w * t).sin());
            assert!((tr.populations[k][0] - p0).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn unitary_evolution_keeps_purity() {
        let h = Hamiltonian::three_site(0.7, 0.2);
        let l = build_uniform(&h, 0.0, None).unwrap();
        // Without dephasing the zero eigenvalue is degenerate; the spectral
        // path handles that.
        let tr = evolve(&l, &DensityMatrix::pure_site(3, 0), &log_times(1e-2, 1e3, 60), &EvolveOptions::default()).unwrap();
        assert!(tr.purity.iter().all(|p| (p - 1.0).abs() < 1e-8));
    }

    #[test]
    fn long_time_limit_is_maximally_mixed() {
        let h = Hamiltonian::three_site(1.0, 0.3);
        let l = build_uniform(&h, 0.5, None).unwrap();
        let tr = evolve(&l, &DensityMatrix::pure_site(3, 2), &[0.0, 1e4], &EvolveOptions::default()).unwrap();
        assert!(tr.populations[1].iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-9));
        assert!((tr.purity[1] - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn isolated_cluster_plateau() {
        // Tight triangle 0-1-2 weakly tied to 3 and 4. Unequal sides keep
        // the cluster spectrum non-degenerate, as in any random geometry.
        let e = 1e-4;
        let mut m = ndarray::Array2::from_elem((5, 5), e);
        for (a, b, j) in [(0, 1, 0.9), (1, 2, 1.0), (0, 2, 1.1)] {
            m[[a, b]] = j;
            m[[b, a]] = j;
        }
        m.diag_mut().fill(0.0);
        let l = build_uniform(&Hamiltonian::from_matrix(m).unwrap(), 0.1, None).unwrap();
        let tr = evolve(&l, &DensityMatrix::pure_site(5, 0), &log_times(1e-1, 1e13, 300), &EvolveOptions::default()).unwrap();
        let p = plateau_report(&tr, (1e3, 1e4)).unwrap();
        for s in 0..3 {
            assert!((p.populations[s] - 1.0 / 3.0).abs() < 1e-2);
        }
        assert!((p.purity - 1.0 / 3.0).abs() < 1e-2);
        // Escape from the cluster runs at ~ε²Γ/J² ≈ 1e-9.
        let end = plateau_report(&tr, (1e13, 1e13)).unwrap();
        assert!(end.populations.iter().all(|v| (v - 0.2).abs() < 1e-6), "{:?}", end.populations);
        assert!(plateau_report(&tr, (1e14, 1e15)).is_err());
    }

    #[test]
    fn degenerate_cluster_is_not_silently_wrong() {
        // Equal sides: the eigenbasis is close to defective. The spectral
        // route must either conserve trace or refuse.
        let e = 1e-4;
        let mut m = ndarray::Array2::from_elem((5, 5), e);
        for a in 0..3 {
            for b in 0..3 {
                m[[a, b]] = 1.0;
            }
        }
        m.diag_mut().fill(0.0);
        let l = build_uniform(&Hamiltonian::from_matrix(m).unwrap(), 0.1, None).unwrap();
        let opts = EvolveOptions { allow_fallback: false, ..EvolveOptions::default() };
        match evolve(&l, &DensityMatrix::pure_site(5, 0), &log_times(1e-1, 1e13, 100), &opts) {
            Ok(tr) => assert!(trace_drift(&tr) <= 1e-8),
            Err(e) => assert!(matches!(e, Error::Numerical { .. })),
        }
    }

    #[test]
    fn grid_validation() {
        let l = build_uniform(&Hamiltonian::homogeneous(2, 1.0), 0.1, None).unwrap();
        let r = DensityMatrix::pure_site(2, 0);
        assert!(evolve(&l, &r, &[], &EvolveOptions::default()).is_err());
        assert!(evolve(&l, &r, &[1.0, 1.0], &EvolveOptions::default()).is_err());
        assert!(evolve(&l, &r, &[-1.0, 1.0], &EvolveOptions::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn spectral_matches_rk4(n in 2usize..=6, seed in any::<u64>()) {
            let mut s = crate::rng::Stream::new(seed, 3);
            let mut m = ndarray::Array2::zeros((n, n));
            for a in 0..n {
                for b in 0..a {
                    let v = 0.1 + s.uniform();
                    m[[a, b]] = v;
                    m[[b, a]] = v;
                }
            }
            let gammas: Vec<f64> = (0..n).map(|_| 0.05 + s.uniform()).collect();
            let l = build_liouvillian(&Hamiltonian::from_matrix(m).unwrap(), &gammas, None).unwrap();
            let times = [0.0, 0.5, 1.3, 4.0, 9.0];
            let rho = DensityMatrix::pure_site(n, s.below(n));
            let store = EvolveOptions { store_states: true, ..Default::default() };
            let a = evolve(&l, &rho, &times, &store).unwrap();
            let b = evolve(&l, &rho, &times, &EvolveOptions { method: Method::Rk4, rk4_step_fraction: 0.05, ..store.clone() }).unwrap();
            for (x, y) in a.states.as_ref().unwrap().iter().zip(b.states.as_ref().unwrap()) {
                for (u, v) in x.iter().zip(y) {
                    prop_assert!((u - v).norm() < 1e-6);
                }
            }
            for (k, x) in a.states.unwrap().into_iter().enumerate() {
                let d = DensityMatrix { matrix: x };
                prop_assert!((a.populations[k].iter().sum::<f64>() - 1.0).abs() < 1e-8);
                prop_assert!(a.purity[k] >= 1.0 / n as f64 - 1e-8 && a.purity[k] <= 1.0 + 1e-8);
                prop_assert!(d.hermiticity_error() < 1e-10);
                prop_assert!(d.min_eigenvalue().unwrap() > -1e-8);
            }
        }

        #[test]
        fn dephasing_alone_freezes_populations(n in 2usize..6, g in 0.01f64..2.0) {
            let h = Hamiltonian::from_matrix(ndarray::Array2::zeros((n, n))).unwrap();
            let l = build_uniform(&h, g, None).unwrap();
            let mut rho = DensityMatrix::maximally_mixed(n);
            rho.matrix[[0, 1]] = C64::new(0.1, 0.05);
            rho.matrix[[1, 0]] = C64::new(0.1, -0.05);
            let tr = evolve(&l, &rho, &[0.0, 1.0, 100.0], &EvolveOptions { method: Method::Rk4, ..Default::default() }).unwrap();
            for pops in &tr.populations {
                for p in pops {
                    prop_assert_eq!(*p, 1.0 / n as f64);
                }
            }
        }
    }
}
