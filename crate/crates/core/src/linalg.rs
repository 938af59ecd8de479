//! Dense complex matrix helpers shared by every module.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn max_abs_vec(a: &CVec) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// `max |a - a^†|`
pub fn hermitian_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut m = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

/// `max |a - a^T|`
pub fn symmetric_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut m = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            m = m.max((a[(i, j)] - a[(j, i)]).norm());
        }
    }
    m
}

pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigen-decomposition of the Hermitian part of `a`, eigenvalues ascending.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitize(a));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn eigvalsh(a: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(hermitize(a)).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_eigenvalue(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    eigvalsh(a)[0]
}

/// Sum of singular values.
pub fn nuclear_norm(a: &CMat) -> f64 {
    a.clone().singular_values().iter().sum()
}

/// `u f(λ) u^†` for a Hermitian matrix with eigenpairs `(λ, u)`.
pub fn spectral_apply(values: &[f64], vectors: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let mut scaled = vectors.clone();
    for (j, &lam) in values.iter().enumerate() {
        let s = f(lam);
        for z in scaled.column_mut(j).iter_mut() {
            *z *= s;
        }
    }
    &scaled * vectors.adjoint()
}

pub fn hermitian_function(a: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let (values, vectors) = eigh(a);
    spectral_apply(&values, &vectors, f)
}

/// Elementwise product of a complex kernel with a real kernel.
pub fn hadamard_real(a: &CMat, v: &RMat) -> CMat {
    a.zip_map(v, |z, r| z * r)
}

pub fn outer(u: &CVec, v: &CVec) -> CMat {
    u * v.transpose()
}

pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn all_finite_vec(a: &CVec) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigh_sorted_and_reconstructs() {
        let a = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let (vals, vecs) = eigh(&a);
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        let back = spectral_apply(&vals, &vecs, |l| c(l, 0.0));
        assert!(max_abs(&(back - a)) < 1e-14);
    }

    #[test]
    fn defects() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 1.0), c(1.0, 1.0), c(0.0, 0.0)]);
        assert!(symmetric_defect(&a) == 0.0);
        assert!((hermitian_defect(&a) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn nuclear_norm_of_rank_one() {
        let u = CVec::from_vec(vec![c(3.0, 0.0), c(0.0, 4.0)]);
        let a = outer(&u, &u.map(|z| z.conj()));
        assert!((nuclear_norm(&a) - 25.0).abs() < 1e-12);
    }
}
