//! Tight-binding Hamiltonian and the vectorized Lindblad generator.
//!
//! Density matrices are vectorized column by column: element `ρ_ab` sits at
//! `idx(a, b) = a + N·b`. With this convention the coherent part is
//! `−i(I⊗H − Hᵀ⊗I)`. Local dephasing `L_j = |j⟩⟨j|` at rate `Γ_j` damps each
//! coherence `ρ_ab` at `(Γ_a + Γ_b)/2` and leaves populations alone.
//!
//! The optional loss channel has jump operator `√γ |n⟩⟨m|`. In the
//! recycling form the extracted population reappears at `n` and the trace is
//! conserved; in the absorbing form it leaves the system.

use ndarray::{Array1, Array2};

use crate::geometry::{CouplingMatrix, SpinConfiguration};
use crate::linalg;
use crate::{Error, Result, C64};

#[inline]
pub fn idx(a: usize, b: usize, n: usize) -> usize {
    a + n * b
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian {
    pub matrix: Array2<f64>,
}

impl Hamiltonian {
    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::InvalidInput("Hamiltonian must be square".into()));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (matrix[[i, j]], matrix[[j, i]]);
                if a != b || !a.is_finite() {
                    return Err(Error::InvalidInput(format!("Hamiltonian not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Hamiltonian { matrix })
    }

    /// Sites 0 and 1 share the strong coupling `j`; both reach site 2 via `eps`.
    pub fn three_site(j: f64, eps: f64) -> Self {
        Hamiltonian {
            matrix: ndarray::array![[0.0, j, eps], [j, 0.0, eps], [eps, eps, 0.0]],
        }
    }

    /// All pairs coupled with the same strength.
    pub fn homogeneous(n: usize, j: f64) -> Self {
        Hamiltonian { matrix: Array2::from_shape_fn((n, n), |(a, b)| if a == b { 0.0 } else { j }) }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Nonzero off-diagonal elements define the hopping graph.
    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for b in 0..n {
                if !seen[b] && self.matrix[[a, b]] != 0.0 {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

pub fn build_hamiltonian(config: &SpinConfiguration, cm: &CouplingMatrix) -> Result<Hamiltonian> {
    let n = config.n;
    if cm.n() != n || config.energies.len() != n {
        return Err(Error::InvalidInput(format!(
            "configuration has {n} sites, coupling matrix {}",
            cm.n()
        )));
    }
    let mut m = cm.values.clone();
    for i in 0..n {
        m[[i, i]] = config.energies[i];
    }
    Hamiltonian::from_matrix(m)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Loss {
    /// `√rate |source⟩⟨sink|`: population leaves `sink` and re-enters at `source`.
    Recycling { source: usize, sink: usize, rate: f64 },
    /// Population leaves `sink` for good.
    Absorbing { sink: usize, rate: f64 },
}

impl Loss {
    pub fn sink(&self) -> usize {
        match *self {
            Loss::Recycling { sink, .. } | Loss::Absorbing { sink, .. } => sink,
        }
    }
    pub fn rate(&self) -> f64 {
        match *self {
            Loss::Recycling { rate, .. } | Loss::Absorbing { rate, .. } => rate,
        }
    }
}

/// Compressed sparse rows with complex entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<C64>,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[s..e].iter().copied().zip(self.vals[s..e].iter().copied())
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut d = Array2::zeros((self.dim, self.dim));
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                d[[r, c]] += v;
            }
        }
        d
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim).map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct LiouvillianOperator {
    pub n: usize,
    pub matrix: SparseMatrix,
    pub hamiltonian: Hamiltonian,
    pub dephasing: Vec<f64>,
    pub loss: Option<Loss>,
}

pub fn build_liouvillian(h: &Hamiltonian, gammas: &[f64], loss: Option<Loss>) -> Result<LiouvillianOperator> {
    let n = h.n();
    if gammas.len() != n {
        return Err(Error::InvalidInput(format!("{} dephasing rates for {n} sites", gammas.len())));
    }
    if gammas.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidInput("dephasing rates must be finite and non-negative".into()));
    }
    if let Some(l) = loss {
        let ok_sites = match l {
            Loss::Recycling { source, sink, .. } => source < n && sink < n,
            Loss::Absorbing { sink, .. } => sink < n,
        };
        if !ok_sites {
            return Err(Error::InvalidInput("loss channel names a missing site".into()));
        }
        if !(l.rate() >= 0.0) || !l.rate().is_finite() {
            return Err(Error::InvalidInput("loss rate must be finite and non-negative".into()));
        }
    }
    let hm = &h.matrix;
    let n2 = n * n;
    let mut row_ptr = Vec::with_capacity(n2 + 1);
    let mut cols = Vec::with_capacity(n2 * (2 * n));
    let mut vals = Vec::with_capacity(n2 * (2 * n));
    row_ptr.push(0);
    let mut row: Vec<(usize, C64)> = Vec::with_capacity(2 * n + 1);
    let i = C64::new(0.0, 1.0);
    // Row index r = idx(a, b) = a + n·b, so iterate b outer, a inner.
    for b in 0..n {
        for a in 0..n {
            row.clear();
            let mut diag = -i * (hm[[a, a]] - hm[[b, b]]);
            if a != b {
                diag -= 0.5 * (gammas[a] + gammas[b]);
            }
            if let Some(l) = loss {
                let m = l.sink();
                let half = 0.5 * l.rate();
                if a == m {
                    diag -= half;
                }
                if b == m {
                    diag -= half;
                }
            }
            row.push((idx(a, b, n), diag));
            for c in 0..n {
                if c != a && hm[[a, c]] != 0.0 {
                    row.push((idx(c, b, n), -i * hm[[a, c]]));
                }
                if c != b && hm[[c, b]] != 0.0 {
                    row.push((idx(a, c, n), i * hm[[c, b]]));
                }
            }
            if let Some(Loss::Recycling { source, sink, rate }) = loss {
                if a == source && b == source {
                    row.push((idx(sink, sink, n), C64::new(rate, 0.0)));
                }
            }
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let (c, mut v) = row[k];
                k += 1;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                if v != C64::new(0.0, 0.0) {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
    }
    Ok(LiouvillianOperator {
        n,
        matrix: SparseMatrix { dim: n2, row_ptr, cols, vals },
        hamiltonian: h.clone(),
        dephasing: gammas.to_vec(),
        loss,
    })
}

/// Uniform dephasing `gamma` on every site.
pub fn build_uniform(h: &Hamiltonian, gamma: f64, loss: Option<Loss>) -> Result<LiouvillianOperator> {
    build_liouvillian(h, &vec![gamma; h.n()], loss)
}

pub fn vectorize(rho: &Array2<C64>) -> Vec<C64> {
    let n = rho.nrows();
    let mut v = vec![C64::new(0.0, 0.0); n * n];
    for b in 0..n {
        for a in 0..n {
            v[idx(a, b, n)] = rho[[a, b]];
        }
    }
    v
}

pub fn matricize(v: &[C64], n: usize) -> Array2<C64> {
    Array2::from_shape_fn((n, n), |(a, b)| v[idx(a, b, n)])
}

impl LiouvillianOperator {
    /// `dρ/dt` for a matrix-shaped state.
    pub fn apply(&self, rho: &Array2<C64>) -> Array2<C64> {
        matricize(&self.matrix.apply(&vectorize(rho)), self.n)
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm_inf()
    }

    /// The generator restricted to Hermitian matrices, as a real `N²×N²`
    /// matrix.
    ///
    /// A Hermitian `X` is stored in a real vector `v` of length `N²` laid out
    /// like the complex vectorization: `v[idx(a,a)] = X_aa`, and for `a < b`
    /// `v[idx(a,b)] = Re X_ab`, `v[idx(b,a)] = Im X_ba`. Rows follow the same
    /// layout applied to `𝓛X`. Since 𝓛 maps Hermitian matrices to Hermitian
    /// matrices this is an exact real form with the same spectrum.
    pub fn hermitian_real_form(&self) -> Array2<f64> {
        let n = self.n;
        let n2 = n * n;
        let mut m = Array2::<f64>::zeros((n2, n2));
        let i = C64::new(0.0, 1.0);
        for b in 0..n {
            for a in 0..n {
                let r = idx(a, b, n);
                for (c, v) in self.matrix.row(r) {
                    let (p, q) = (c % n, c / n);
                    // Complex component x_pq in terms of the real parameters.
                    let params: [(usize, C64); 2] = if p == q {
                        [(c, C64::new(1.0, 0.0)), (usize::MAX, C64::new(0.0, 0.0))]
                    } else if p < q {
                        // x_pq = Re x_pq − i·Im x_qp
                        [(c, C64::new(1.0, 0.0)), (idx(q, p, n), -i)]
                    } else {
                        // x_pq = Re x_qp + i·Im x_pq
                        [(idx(q, p, n), C64::new(1.0, 0.0)), (c, i)]
                    };
                    for (col, coef) in params {
                        if col == usize::MAX {
                            continue;
                        }
                        let z = v * coef;
                        m[[r, col]] += if a <= b { z.re } else { z.im };
                    }
                }
            }
        }
        m
    }
}

/// Hermitian matrix to its real-form vector (see
/// [`LiouvillianOperator::hermitian_real_form`]).
pub fn to_real_form(x: &Array2<C64>) -> Vec<f64> {
    let n = x.nrows();
    let mut v = vec![0.0; n * n];
    for b in 0..n {
        for a in 0..n {
            v[idx(a, b, n)] = if a <= b { x[[a, b]].re } else { x[[a, b]].im };
        }
    }
    v
}

pub fn from_real_form(v: &[f64], n: usize) -> Array2<C64> {
    Array2::from_shape_fn((n, n), |(a, b)| {
        if a == b {
            C64::new(v[idx(a, a, n)], 0.0)
        } else if a < b {
            C64::new(v[idx(a, b, n)], -v[idx(b, a, n)])
        } else {
            C64::new(v[idx(b, a, n)], v[idx(a, b, n)])
        }
    })
}

#[derive(Clone, Debug, Default)]
pub struct DecomposeOptions {
    /// Accept several stationary modes instead of reporting a disconnected network.
    pub allow_multiple_zero_modes: bool,
}

/// Full eigendecomposition of a Liouvillian.
///
/// `left_modes` rows are the dual basis of `right_modes` columns under the
/// plain bilinear product: `Σ_c left[k,c]·right[c,l] = δ_kl`.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub n: usize,
    pub eigenvalues: Array1<C64>,
    pub right_modes: Array2<C64>,
    pub left_modes: Array2<C64>,
    pub zero_mode_index: Option<usize>,
    pub zero_mode_count: usize,
    /// `max_k ‖𝓛R_k − λ_k R_k‖_∞` with unit-norm `R_k`.
    pub residual: f64,
    /// `max |left·right − I|`.
    pub biorthogonality_error: f64,
    pub zero_tolerance: f64,
}

pub fn decompose(l: &LiouvillianOperator, opts: &DecomposeOptions) -> Result<SpectralDecomposition> {
    let dense = l.matrix.to_dense();
    if dense.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::InvalidInput("non-finite generator".into()));
    }
    let (vals, vecs) = linalg::eig(&dense)?;
    let dim = vals.len();
    let mut order: Vec<usize> = (0..dim).collect();
    // Real parts that agree to rounding count as ties, so conjugate pairs
    // come out with the positive imaginary part first.
    let scale = vals.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let bucket = |v: C64| (v.re / (1e-11 * scale)).round();
    order.sort_by(|&x, &y| {
        bucket(vals[y]).total_cmp(&bucket(vals[x])).then(vals[y].im.total_cmp(&vals[x].im))
    });
    let eigenvalues = Array1::from_iter(order.iter().map(|&k| vals[k]));
    let mut right = Array2::<C64>::zeros((dim, dim));
    for (new, &old) in order.iter().enumerate() {
        let col = vecs.column(old);
        let nrm = col.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        for r in 0..dim {
            right[[r, new]] = col[r] / nrm;
        }
    }
    let scale = eigenvalues.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let zero_tolerance = 1e-10 * scale;
    let zeros: Vec<usize> = (0..dim).filter(|&k| eigenvalues[k].norm() <= zero_tolerance).collect();
    let trace_preserving = !matches!(l.loss, Some(Loss::Absorbing { .. }));
    if trace_preserving && zeros.len() != 1 && !opts.allow_multiple_zero_modes {
        return Err(Error::ZeroModes { found: zeros.len() });
    }
    if trace_preserving && zeros.len() == 1 {
        impose_trace_structure(&mut right, zeros[0], l.n, l.loss.is_none());
    }
    // Anything inside the tolerance is zero to working precision; a stray
    // 1e-17 would otherwise be amplified by e^{λt} at t ~ 1e13.
    let mut eigenvalues = eigenvalues;
    for &k in &zeros {
        eigenvalues[k] = C64::new(0.0, 0.0);
    }
    let mut left = linalg::inverse(&right)?;
    if trace_preserving && zeros.len() == 1 {
        // With traceless non-stationary modes the dual of the steady mode is
        // exactly the trace functional.
        let z = zeros[0];
        let tr: C64 = (0..l.n).map(|a| right[[idx(a, a, l.n), z]]).sum();
        left.row_mut(z).fill(C64::new(0.0, 0.0));
        for a in 0..l.n {
            left[[z, idx(a, a, l.n)]] = C64::new(1.0, 0.0) / tr;
        }
    }

    let mut residual = 0.0f64;
    for k in 0..dim {
        let rk: Vec<C64> = right.column(k).to_vec();
        let lr = l.matrix.apply(&rk);
        for r in 0..dim {
            residual = residual.max((lr[r] - eigenvalues[k] * rk[r]).norm());
        }
    }
    let prod = left.dot(&right);
    let mut biorth = 0.0f64;
    for ((r, c), v) in prod.indexed_iter() {
        let want = if r == c { 1.0 } else { 0.0 };
        biorth = biorth.max((v - C64::new(want, 0.0)).norm());
    }

    Ok(SpectralDecomposition {
        n: l.n,
        eigenvalues,
        right_modes: right,
        left_modes: left,
        zero_mode_index: zeros.first().copied(),
        zero_mode_count: zeros.len(),
        residual,
        biorthogonality_error: biorth,
        zero_tolerance,
    })
}

/// Exact facts the eigensolver only honours to ~eps/gap when slow modes
/// crowd the origin: every non-stationary right mode is traceless, and
/// without loss the steady mode is the identity.
fn impose_trace_structure(right: &mut Array2<C64>, z: usize, n: usize, unital: bool) {
    let dim = n * n;
    if unital {
        right.column_mut(z).fill(C64::new(0.0, 0.0));
        for a in 0..n {
            right[[idx(a, a, n), z]] = C64::new(1.0 / (n as f64).sqrt(), 0.0);
        }
    }
    let trace = |r: &Array2<C64>, k: usize| -> C64 { (0..n).map(|a| r[[idx(a, a, n), k]]).sum() };
    let tz = trace(right, z);
    for k in 0..dim {
        if k == z {
            continue;
        }
        let f = trace(right, k) / tz;
        if f.norm() == 0.0 {
            continue;
        }
        for r in 0..dim {
            let v = right[[r, z]];
            right[[r, k]] -= f * v;
        }
        let nrm = right.column(k).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        right.column_mut(k).mapv_inplace(|v| v / nrm);
    }
}

impl SpectralDecomposition {
    /// Largest distance between an eigenvalue in the upper half-plane and the
    /// conjugate of its nearest unused partner in the lower one. Eigenvalues
    /// within the zero tolerance of the real axis are their own partners.
    /// Zero for spectra of real operators.
    pub fn conjugate_pairing_error(&self) -> f64 {
        let tol = self.zero_tolerance;
        let upper: Vec<C64> = self.eigenvalues.iter().copied().filter(|v| v.im > tol).collect();
        let lower: Vec<C64> = self.eigenvalues.iter().copied().filter(|v| v.im < -tol).collect();
        let mut used = vec![false; lower.len()];
        let mut worst = 0.0f64;
        for u in &upper {
            let target = u.conj();
            let best = (0..lower.len())
                .filter(|&j| !used[j])
                .min_by(|&x, &y| (lower[x] - target).norm().total_cmp(&(lower[y] - target).norm()));
            match best {
                Some(j) => {
                    used[j] = true;
                    worst = worst.max((lower[j] - target).norm());
                }
                None => worst = worst.max(2.0 * u.im),
            }
        }
        for (j, l) in lower.iter().enumerate() {
            if !used[j] {
                worst = worst.max(2.0 * l.im.abs());
            }
        }
        worst
    }

    /// Matricized right mode `k`.
    pub fn right_matrix(&self, k: usize) -> Array2<C64> {
        matricize(&self.right_modes.column(k).to_vec(), self.n)
    }
}

/// Population weight of each site in the selected right modes, normalized
/// to unit sum per mode. Pure-coherence modes get all-zero rows.
pub fn mode_site_weights(spec: &SpectralDecomposition, modes: &[usize]) -> Vec<Vec<f64>> {
    let n = spec.n;
    modes
        .iter()
        .map(|&k| {
            let w: Vec<f64> = (0..n).map(|j| spec.right_modes[[idx(j, j, n), k]].norm()).collect();
            let total: f64 = w.iter().sum();
            // Mode vectors have unit norm, so this threshold is absolute.
            if total < 1e-10 {
                vec![0.0; n]
            } else {
                w.iter().map(|v| v / total).collect()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random_hamiltonian(n: usize, seed: u64) -> Hamiltonian {
        let mut s = crate::rng::Stream::new(seed, 99);
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            m[[i, i]] = s.uniform() - 0.5;
            for j in 0..i {
                let v = 10f64.powf(-3.0 * s.uniform());
                m[[i, j]] = v;
                m[[j, i]] = v;
            }
        }
        Hamiltonian::from_matrix(m).unwrap()
    }

    fn random_hermitian(n: usize, seed: u64) -> Array2<C64> {
        let mut s = crate::rng::Stream::new(seed, 7);
        let mut x = Array2::zeros((n, n));
        for a in 0..n {
            x[[a, a]] = c(s.uniform());
            for b in 0..a {
                let v = C64::new(s.uniform() - 0.5, s.uniform() - 0.5);
                x[[a, b]] = v;
                x[[b, a]] = v.conj();
            }
        }
        x
    }

    #[test]
    fn single_site_is_zero() {
        let h = Hamiltonian::from_matrix(Array2::zeros((1, 1))).unwrap();
        let l = build_uniform(&h, 5.0, None).unwrap();
        assert!(l.matrix.to_dense().iter().all(|v| v.norm() == 0.0));
        let s = decompose(&l, &DecomposeOptions::default()).unwrap();
        assert_eq!(s.eigenvalues.len(), 1);
        assert_eq!(s.eigenvalues[0], c(0.0));
    }

    #[test]
    fn two_site_spectrum() {
        let (j, g) = (1.0, 0.1);
        let h = Hamiltonian::from_matrix(ndarray::array![[0.0, j], [j, 0.0]]).unwrap();
        let l = build_uniform(&h, g, None).unwrap();
        let s = decompose(&l, &DecomposeOptions::default()).unwrap();
        let disc = C64::new(g * g - 16.0 * j * j, 0.0).sqrt();
        let mut want = [c(0.0), c(-g), (c(-g) + disc) / 2.0, (c(-g) - disc) / 2.0];
        want.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
        for (got, w) in s.eigenvalues.iter().zip(want) {
            assert!((got - w).norm() < 1e-12, "{got} vs {w}");
        }
        assert!((want[1] - C64::new(-0.05, 1.99937)).norm() < 1e-5);
        assert_eq!(s.zero_mode_index, Some(0));
        assert!(s.residual < 1e-12 && s.biorthogonality_error < 1e-10);

        // The −Γ mode is the antisymmetric coherence ρ_01 − ρ_10: no population.
        let k = (0..4).find(|&k| (s.eigenvalues[k] + c(g)).norm() < 1e-10).unwrap();
        let w = mode_site_weights(&s, &[k, 0]);
        assert_eq!(w[0], vec![0.0, 0.0]);
        assert!(w[1].iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn maximally_mixed_is_stationary() {
        let h = random_hamiltonian(5, 3);
        let l = build_uniform(&h, 0.3, None).unwrap();
        let rho = Array2::from_diag(&Array1::from_elem(5, c(0.2)));
        assert!(l.apply(&rho).iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn three_site_matrix_and_rotation() {
        let (j, e) = (1e-2, 1e-4);
        let h = Hamiltonian::three_site(j, e);
        assert_eq!(h.matrix, ndarray::array![[0.0, j, e], [j, 0.0, e], [e, e, 0.0]]);
        // |±⟩ = (|0⟩ ± |1⟩)/√2, site 2 unchanged.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = ndarray::array![[s, s, 0.0], [s, -s, 0.0], [0.0, 0.0, 1.0]];
        let r = u.dot(&h.matrix).dot(&u.t());
        assert!((r[[0, 0]] - j).abs() < 1e-15 && (r[[1, 1]] + j).abs() < 1e-15);
        assert!((r[[0, 2]] - 2f64.sqrt() * e).abs() < 1e-17);
        assert!(r[[1, 2]].abs() < 1e-18, "dark state couples to site 2");
    }

    #[test]
    fn negative_rates_rejected() {
        let h = Hamiltonian::homogeneous(2, 1.0);
        assert!(build_liouvillian(&h, &[0.1, -0.1], None).is_err());
        assert!(build_uniform(&h, 0.1, Some(Loss::Absorbing { sink: 0, rate: -1.0 })).is_err());
    }

    #[test]
    fn disconnected_network_reports_zero_modes() {
        let mut m = Array2::zeros((4, 4));
        m[[0, 1]] = 1.0;
        m[[1, 0]] = 1.0;
        m[[2, 3]] = 0.5;
        m[[3, 2]] = 0.5;
        let l = build_uniform(&Hamiltonian::from_matrix(m).unwrap(), 0.1, None).unwrap();
        assert!(matches!(decompose(&l, &DecomposeOptions::default()), Err(Error::ZeroModes { found: 2 })));
        let s = decompose(&l, &DecomposeOptions { allow_multiple_zero_modes: true }).unwrap();
        assert_eq!(s.zero_mode_count, 2);
    }

    #[test]
    fn sparsity_is_cubic() {
        let h = random_hamiltonian(12, 1);
        let l = build_uniform(&h, 0.1, None).unwrap();
        // 2N−1 entries per row at most.
        assert!(l.matrix.nnz() <= 12 * 12 * (2 * 12 - 1));
    }

    #[test]
    fn real_form_round_trip_and_action() {
        let n = 4;
        let h = random_hamiltonian(n, 5);
        let l = build_liouvillian(&h, &[0.1, 0.2, 0.0, 0.5], Some(Loss::Recycling { source: 0, sink: 3, rate: 0.3 }))
            .unwrap();
        let x = random_hermitian(n, 11);
        let v = to_real_form(&x);
        assert_eq!(from_real_form(&v, n), x);
        let m = l.hermitian_real_form();
        let lhs = m.dot(&Array1::from(v));
        let rhs = to_real_form(&l.apply(&x));
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn generator_invariants(n in 2usize..8, seed in any::<u64>(), lg in -4.0f64..0.5) {
            let h = random_hamiltonian(n, seed);
            let mut s = crate::rng::Stream::new(seed, 1);
            let gammas: Vec<f64> = (0..n).map(|_| 10f64.powf(lg) * (0.5 + s.uniform())).collect();
            let l = build_liouvillian(&h, &gammas, None).unwrap();
            let d = l.matrix.to_dense();
            // Trace preservation: population rows sum to zero against every column.
            for col in 0..n * n {
                let t: C64 = (0..n).map(|a| d[[idx(a, a, n), col]]).sum();
                prop_assert!(t.norm() < 1e-12);
            }
            // Hermiticity preservation.
            let x = random_hermitian(n, seed ^ 0x5a5a);
            let y = l.apply(&x);
            for a in 0..n {
                for b in 0..n {
                    prop_assert!((y[[a, b]] - y[[b, a]].conj()).norm() < 1e-12);
                }
            }
        }
    }
}
