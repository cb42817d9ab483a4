//! Small dense linear algebra helpers shared by the other modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Pauli matrices sigma_x, sigma_y, sigma_z.
pub fn pauli() -> [CMat; 3] {
    [
        CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    ]
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn symmetrize(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    nalgebra::SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn approx_eq(a: &CMat, b: &CMat, tol: f64) -> bool {
    a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() <= tol)
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// Row-major flattening.
pub fn to_flat(m: &CMat) -> Vec<C64> {
    let (r, cc) = m.shape();
    let mut out = Vec::with_capacity(r * cc);
    for i in 0..r {
        for j in 0..cc {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_flat(n: usize, data: &[C64]) -> CMat {
    CMat::from_row_slice(n, n, data)
}

/// log |det| of a real square matrix through LU; `None` when singular.
pub fn ln_abs_det(m: DMatrix<f64>) -> Option<f64> {
    let n = m.nrows();
    let lu = m.lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..n {
        let v = u[(i, i)].abs();
        if !(v > 0.0) || !v.is_finite() {
            return None;
        }
        acc += v.ln();
    }
    Some(acc)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// log of the arithmetic mean of exp(xs).
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// Outer product |a><b|.
pub fn outer(a: &CVec, b: &CVec) -> CMat {
    a * b.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_algebra() {
        let [x, y, z] = pauli();
        let prod = &x * &y;
        assert!(approx_eq(&prod, &(z.clone() * I), 1e-15));
        assert!(approx_eq(&(&z * &z), &identity(2), 1e-15));
    }

    #[test]
    fn log_sum_exp_stable() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_mean_exp(&v) - 1000.0).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn eigen_sorted() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let (vals, vecs) = hermitian_eigen(&m);
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
        let v = vecs.column(1).into_owned();
        let mv = &m * &v;
        assert!((&mv - v * c(3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn det_of_diag() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -3.0, 0.5]));
        assert!((ln_abs_det(m).unwrap() - 3f64.ln()).abs() < 1e-14);
        assert!(ln_abs_det(DMatrix::zeros(2, 2)).is_none());
    }
}
