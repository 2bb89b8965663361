//! Small dense complex linear-algebra helpers shared by the model and the solver.

use alloc::vec::Vec;
use core::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const HERMITIAN_TOL: f64 = 1e-12;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Largest absolute entry of `m - m^H`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && hermitian_defect(m) <= tol * m.norm().max(1.0)
}

/// `(m + m^H) / 2`
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues in ascending order.
pub fn hermitian_eigen(m: &CMat) -> (RVec, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (RVec::zeros(0), CMat::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = RVec::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMat) -> RVec {
    hermitian_eigen(m).0
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    let ev = hermitian_eigenvalues(m);
    if ev.is_empty() {
        0.0
    } else {
        ev[0]
    }
}

/// Principal square root of a Hermitian PSD matrix. Eigenvalues in
/// `[-clamp_tol, 0)` are treated as zero; anything more negative is an error.
pub fn psd_sqrt(m: &CMat, clamp_tol: f64) -> Result<CMat> {
    let defect = hermitian_defect(m);
    if defect > 1e-9 * m.norm().max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    let (vals, vecs) = hermitian_eigen(m);
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let mut root = CMat::zeros(m.nrows(), m.ncols());
    for (i, &lambda) in vals.iter().enumerate() {
        if lambda < -clamp_tol * scale {
            return Err(Error::NotPsd(lambda));
        }
        let s = libm::sqrt(lambda.max(0.0));
        if s == 0.0 {
            continue;
        }
        let u = vecs.column(i);
        root += (&u * u.adjoint()).scale(s);
    }
    Ok(hermitian_part(&root))
}

/// `Re(h^H W h)`
pub fn quad_form(h: &CVec, w: &CMat) -> f64 {
    (h.adjoint() * w * h)[(0, 0)].re
}

/// `v v^H`
pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Real symmetric embedding `[[Re H, -Im H], [Im H, Re H]]` of a Hermitian matrix.
pub fn embed_complex(h: &CMat) -> Result<RMat> {
    if !h.is_square() {
        return Err(Error::Dimension {
            expected: h.nrows(),
            got: h.ncols(),
        });
    }
    let defect = hermitian_defect(h);
    if defect > HERMITIAN_TOL * h.norm().max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    let n = h.nrows();
    let mut out = RMat::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    Ok(out)
}

/// `true` iff the minimum eigenvalue is at least `-tol * max(1, ||H||_2)`.
pub fn check_psd(h: &CMat, tol: f64) -> bool {
    let ev = hermitian_eigenvalues(h);
    if ev.is_empty() {
        return true;
    }
    let norm = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    ev[0] >= -tol * norm.max(1.0)
}

/// Number of real coordinates of an `n x n` Hermitian matrix.
#[inline]
pub const fn hermitian_dim(n: usize) -> usize {
    n * n
}

/// Coordinate layout shared by [`hvec`], [`hmat`] and matrix variables:
/// columns of the upper triangle, each off-diagonal pair as (re, im), then the diagonal entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HermCoord {
    Diag(usize),
    Re(usize, usize),
    Im(usize, usize),
}

pub fn hermitian_coords(n: usize) -> impl Iterator<Item = HermCoord> {
    (0..n).flat_map(|j| {
        (0..j)
            .flat_map(move |i| [HermCoord::Re(i, j), HermCoord::Im(i, j)])
            .chain(core::iter::once(HermCoord::Diag(j)))
    })
}

/// Basis matrix whose coefficient is the raw coordinate value (no sqrt(2) scaling).
pub fn hermitian_basis(n: usize, coord: HermCoord) -> CMat {
    let mut m = CMat::zeros(n, n);
    match coord {
        HermCoord::Diag(j) => m[(j, j)] = c(1.0, 0.0),
        HermCoord::Re(i, j) => {
            m[(i, j)] = c(1.0, 0.0);
            m[(j, i)] = c(1.0, 0.0);
        }
        HermCoord::Im(i, j) => {
            m[(i, j)] = c(0.0, 1.0);
            m[(j, i)] = c(0.0, -1.0);
        }
    }
    m
}

/// Isometric vectorisation: `<hvec(X), hvec(Y)> = Re Tr(X Y)` for Hermitian X, Y.
pub fn hvec(m: &CMat, out: &mut [f64]) {
    let n = m.nrows();
    debug_assert_eq!(out.len(), n * n);
    for (slot, coord) in out.iter_mut().zip(hermitian_coords(n)) {
        *slot = match coord {
            HermCoord::Diag(j) => m[(j, j)].re,
            HermCoord::Re(i, j) => SQRT_2 * 0.5 * (m[(i, j)].re + m[(j, i)].re),
            HermCoord::Im(i, j) => SQRT_2 * 0.5 * (m[(i, j)].im - m[(j, i)].im),
        };
    }
}

/// Inverse of [`hvec`].
pub fn hmat(v: &[f64], n: usize) -> CMat {
    debug_assert_eq!(v.len(), n * n);
    let mut m = CMat::zeros(n, n);
    for (&x, coord) in v.iter().zip(hermitian_coords(n)) {
        match coord {
            HermCoord::Diag(j) => m[(j, j)] = c(x, 0.0),
            HermCoord::Re(i, j) => {
                m[(i, j)].re = x / SQRT_2;
                m[(j, i)].re = x / SQRT_2;
            }
            HermCoord::Im(i, j) => {
                m[(i, j)].im = x / SQRT_2;
                m[(j, i)].im = -x / SQRT_2;
            }
        }
    }
    m
}
