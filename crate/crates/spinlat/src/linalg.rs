//! Dense LU with a 1-norm condition estimate, eigendecompositions, and the
//! conversions between ndarray and faer storage the physics modules share.
//!
//! Factorizations run single-threaded so results do not depend on the
//! thread count; parallelism lives at the ensemble level.

use std::sync::Once;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, MatMut, Par, Side};
use ndarray::{Array1, Array2};

use crate::{Error, Result, C64};

static SEQUENTIAL: Once = Once::new();

fn init() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// Scalars the solvers run on: `f64` for real forms, `C64` for the rest.
pub(crate) trait Field: faer::traits::ComplexField + Copy + Send + Sync + 'static {
    fn modulus(self) -> f64;
    /// `z/|z|`, or one at zero.
    fn phase(self) -> Self;
    fn real(x: f64) -> Self;
    fn re(self) -> f64;
    fn adj(self) -> Self;
}

impl Field for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn phase(self) -> Self {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
    fn real(x: f64) -> Self {
        x
    }
    fn re(self) -> f64 {
        self
    }
    fn adj(self) -> Self {
        self
    }
}

impl Field for C64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn phase(self) -> Self {
        let r = self.norm();
        if r == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            self / r
        }
    }
    fn real(x: f64) -> Self {
        C64::new(x, 0.0)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn adj(self) -> Self {
        self.conj()
    }
}

fn to_faer<T: Field>(a: &Array2<T>) -> Mat<T> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// LU factors of a square matrix plus the estimated reciprocal condition
/// number of the original matrix in the 1-norm.
pub(crate) struct Lu<T: Field> {
    n: usize,
    lu: PartialPivLu<T>,
    pub rcond: f64,
}

pub(crate) fn factorize<T: Field>(a: Array2<T>) -> Result<Lu<T>> {
    init();
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "factorize needs a square matrix");
    if n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if a.iter().any(|v| !v.modulus().is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let anorm = a.columns().into_iter().map(|c| c.iter().map(|v| v.modulus()).sum::<f64>()).fold(0.0, f64::max);
    let m = to_faer(&a);
    let lu = m.partial_piv_lu();
    let u = lu.U();
    let singular = (0..n).any(|k| {
        let d = u[(k, k)].modulus();
        d == 0.0 || !d.is_finite()
    });
    if singular || anorm == 0.0 {
        return Err(Error::Singular("zero pivot".into()));
    }
    let mut out = Lu { n, lu, rcond: 0.0 };
    let inv_norm = out.inverse_norm_estimate();
    out.rcond = 1.0 / (anorm * inv_norm);
    if !(out.rcond > 0.0) {
        return Err(Error::Singular("zero reciprocal condition number".into()));
    }
    Ok(out)
}

impl<T: Field> Lu<T> {
    pub fn solve(&self, b: &mut [T]) -> Result<()> {
        assert_eq!(b.len(), self.n);
        self.lu.solve_in_place(MatMut::from_column_major_slice_mut(b, self.n, 1));
        if b.iter().any(|v| !v.modulus().is_finite()) {
            return Err(Error::Singular("non-finite solution".into()));
        }
        Ok(())
    }

    fn solve_adjoint(&self, b: &mut [T]) {
        self.lu.solve_adjoint_in_place(MatMut::from_column_major_slice_mut(b, self.n, 1));
    }

    #[cfg(test)]
    pub fn solve_vec(&self, b: &Array1<T>) -> Result<Array1<T>> {
        let mut x = b.to_vec();
        self.solve(&mut x)?;
        Ok(Array1::from(x))
    }

    /// Hager/Higham estimate of `‖A⁻¹‖₁`, with Higham's alternating-sign
    /// safeguard. Exact for n ≤ 4 in practice and rarely off by more than
    /// a small factor.
    fn inverse_norm_estimate(&self) -> f64 {
        let n = self.n;
        let norm1 = |v: &[T]| v.iter().map(|x| x.modulus()).sum::<f64>();
        let mut x = vec![T::real(1.0 / n as f64); n];
        let mut est = 0.0f64;
        let mut last_j = usize::MAX;
        for iter in 0..5 {
            let mut y = x.clone();
            self.lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut y, n, 1));
            let new_est = norm1(&y);
            if iter > 0 && new_est <= est {
                est = est.max(new_est);
                break;
            }
            est = new_est;
            let mut z: Vec<T> = y.iter().map(|v| v.phase()).collect();
            self.solve_adjoint(&mut z);
            let (j, zmax) = z.iter().enumerate().map(|(k, v)| (k, v.modulus())).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.adj() * *b).re()).sum();
            if iter > 0 && (zmax <= ztx || j == last_j) {
                break;
            }
            last_j = j;
            x.iter_mut().for_each(|v| *v = T::real(0.0));
            x[j] = T::real(1.0);
        }
        let mut alt: Vec<T> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                T::real(s * (1.0 + i as f64 / (n.max(2) - 1) as f64))
            })
            .collect();
        self.lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut alt, n, 1));
        est.max(2.0 * norm1(&alt) / (3.0 * n as f64))
    }
}

/// Eigenvalues and right eigenvectors (columns) of a dense complex matrix.
pub(crate) fn eig(a: &Array2<C64>) -> Result<(Array1<C64>, Array2<C64>)> {
    init();
    let e = to_faer(a).eigen().map_err(|e| Error::Backend(format!("{e:?}")))?;
    let n = a.nrows();
    let s = e.S().column_vector();
    let u = e.U();
    let vals = Array1::from_shape_fn(n, |k| s[k]);
    let vecs = Array2::from_shape_fn((n, n), |(i, k)| u[(i, k)]);
    if vals.iter().any(|v| !v.is_finite()) || vecs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical { what: "eigendecomposition".into(), residual: f64::NAN });
    }
    Ok((vals, vecs))
}

/// Ascending eigenvalues of a Hermitian matrix (lower triangle is read).
pub(crate) fn eigvalsh(a: &Array2<C64>) -> Result<Vec<f64>> {
    init();
    to_faer(a).self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Backend(format!("{e:?}")))
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a
/// real symmetric matrix.
pub(crate) fn eigh(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    init();
    let n = a.nrows();
    let e = to_faer(a).self_adjoint_eigen(Side::Lower).map_err(|e| Error::Backend(format!("{e:?}")))?;
    let s = e.S().column_vector();
    let u = e.U();
    Ok(((0..n).map(|k| s[k]).collect(), Array2::from_shape_fn((n, n), |(i, k)| u[(i, k)])))
}

/// Inverse via LU, column by column.
pub(crate) fn inverse(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    let lu = factorize(a.clone())?;
    let mut inv = Array2::<C64>::zeros((n, n));
    let mut e = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        e[j] = C64::new(1.0, 0.0);
        lu.solve(&mut e)?;
        for i in 0..n {
            inv[[i, j]] = e[i];
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lu_solves_and_estimates_condition() {
        let a = array![[4.0, 1.0], [2.0, 3.0]];
        let lu = factorize(a.clone()).unwrap();
        let x = lu.solve_vec(&array![1.0, 2.0]).unwrap();
        let r = a.dot(&x) - array![1.0, 2.0];
        assert!(r.iter().all(|v| v.abs() < 1e-14));
        // ‖A‖₁ = 6, ‖A⁻¹‖₁ = 0.5, so rcond = 1/3.
        assert!((lu.rcond - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn pivoting_system() {
        // Needs row exchanges at every step.
        let a = array![[1e-3, 2.0, 0.5], [4.0, 1.0, 3.0], [2.0, 7.0, 1.0]];
        let b = array![1.0, 2.0, 3.0];
        let x = factorize(a.clone()).unwrap().solve_vec(&b).unwrap();
        assert!((a.dot(&x) - b).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn condition_estimate_tracks_exact_value() {
        // Upper bidiagonal with growing inverse: ‖A⁻¹‖₁ = 2ⁿ − 1, ‖A‖₁ = 3.
        let n = 12;
        let a = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else if j == i + 1 { -2.0 } else { 0.0 });
        let lu = factorize(a).unwrap();
        let exact = 1.0 / (3.0 * (2f64.powi(n as i32) - 1.0));
        assert!(lu.rcond >= exact * 0.999 && lu.rcond <= exact * 10.0, "{} vs {exact}", lu.rcond);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(matches!(factorize(a), Err(Error::Singular(_))));
    }

    #[test]
    fn complex_inverse() {
        let a = array![[C64::new(1.0, 1.0), C64::new(0.0, 2.0)], [C64::new(3.0, 0.0), C64::new(1.0, -1.0)]];
        let p = a.dot(&inverse(&a).unwrap());
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p[[i, j]] - C64::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn symmetric_eigenvectors() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (w, u) = eigh(&a).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] - 3.0).abs() < 1e-14);
        let r = a.dot(&u) - &u * &ndarray::Array1::from(w);
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn hermitian_eigenvalues() {
        let a = array![[C64::new(2.0, 0.0), C64::new(0.0, 1.0)], [C64::new(0.0, -1.0), C64::new(2.0, 0.0)]];
        let ev = eigvalsh(&a).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }
}
