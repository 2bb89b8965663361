//! Affine expressions over the real coordinates of a [`ConicProblem`](super::ConicProblem).
//!
//! Every optimization variable occupies a contiguous range of real coordinates:
//! a scalar takes one, an `n x n` Hermitian matrix takes `n^2` (see
//! [`hermitian_coords`]). Expressions store one coefficient object per coordinate
//! they touch, which keeps evaluation, affinity checks and compilation to
//! standard form trivial.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::linalg::{hermitian_basis, hermitian_coords, CMat, CVec, HermCoord};

/// Handle to an `n x n` Hermitian matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatVar {
    pub offset: usize,
    pub n: usize,
}

impl MatVar {
    pub fn coords(&self) -> impl Iterator<Item = (usize, HermCoord)> + '_ {
        hermitian_coords(self.n)
            .enumerate()
            .map(move |(i, c)| (self.offset + i, c))
    }

    /// Rebuild the matrix from a full coordinate vector.
    pub fn value(&self, x: &[f64]) -> CMat {
        let mut m = CMat::zeros(self.n, self.n);
        for (idx, coord) in self.coords() {
            let v = x[idx];
            match coord {
                HermCoord::Diag(j) => m[(j, j)].re = v,
                HermCoord::Re(i, j) => {
                    m[(i, j)].re = v;
                    m[(j, i)].re = v;
                }
                HermCoord::Im(i, j) => {
                    m[(i, j)].im = v;
                    m[(j, i)].im = -v;
                }
            }
        }
        m
    }

    /// Write `m` into the coordinate slots of this variable.
    pub fn assign(&self, m: &CMat, x: &mut [f64]) {
        for (idx, coord) in self.coords() {
            x[idx] = match coord {
                HermCoord::Diag(j) => m[(j, j)].re,
                HermCoord::Re(i, j) => 0.5 * (m[(i, j)].re + m[(j, i)].re),
                HermCoord::Im(i, j) => 0.5 * (m[(i, j)].im - m[(j, i)].im),
            };
        }
    }
}

/// Handle to a real scalar variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarVar {
    pub index: usize,
}

impl ScalarVar {
    pub fn value(&self, x: &[f64]) -> f64 {
        x[self.index]
    }
}

/// `constant + sum_i coef_i x_i`
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineScalar {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineScalar {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            constant: value,
            terms: Vec::new(),
        }
    }

    pub fn var(v: ScalarVar) -> Self {
        Self {
            constant: 0.0,
            terms: alloc::vec![(v.index, 1.0)],
        }
    }

    /// Linear functional `X -> f(X)` of a matrix variable, sampled on its basis.
    pub fn from_functional(v: MatVar, f: impl Fn(&CMat) -> f64) -> Self {
        let terms = v
            .coords()
            .map(|(idx, coord)| (idx, f(&hermitian_basis(v.n, coord))))
            .filter(|&(_, a)| a != 0.0)
            .collect();
        Self {
            constant: 0.0,
            terms,
        }
    }

    /// `Re(h^H X h)`
    pub fn quad(v: MatVar, h: &CVec) -> Self {
        Self::from_functional(v, |e| crate::linalg::quad_form(h, e))
    }

    /// `Tr(X)`
    pub fn trace(v: MatVar) -> Self {
        Self::from_functional(v, crate::linalg::trace_re)
    }

    pub fn add(mut self, other: &Self) -> Self {
        self.add_scaled(other, 1.0);
        self
    }

    pub fn add_scaled(&mut self, other: &Self, factor: f64) {
        self.constant += factor * other.constant;
        self.terms
            .extend(other.terms.iter().map(|&(i, a)| (i, factor * a)));
    }

    pub fn add_constant(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    pub fn scale(mut self, factor: f64) -> Self {
        self.constant *= factor;
        for t in &mut self.terms {
            t.1 *= factor;
        }
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
    }

    /// Merge repeated coordinates and drop zero coefficients.
    pub fn compress(&mut self) {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, a) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += a,
                _ => out.push((i, a)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
    }
}

/// `constant + sum_i x_i F_i` with Hermitian `F_i`, all of size `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineHermitian {
    pub dim: usize,
    pub constant: CMat,
    pub terms: Vec<(usize, CMat)>,
}

impl AffineHermitian {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            constant: CMat::zeros(dim, dim),
            terms: Vec::new(),
        }
    }

    pub fn constant(m: CMat) -> Self {
        Self {
            dim: m.nrows(),
            constant: m,
            terms: Vec::new(),
        }
    }

    /// Linear map `X -> f(X)` applied to a matrix variable; `f` must map Hermitian to Hermitian.
    pub fn from_map(v: MatVar, dim: usize, f: impl Fn(&CMat) -> CMat) -> Self {
        let terms = v
            .coords()
            .map(|(idx, coord)| (idx, f(&hermitian_basis(v.n, coord))))
            .collect();
        Self {
            dim,
            constant: CMat::zeros(dim, dim),
            terms,
        }
    }

    /// `X` itself.
    pub fn identity_map(v: MatVar) -> Self {
        Self::from_map(v, v.n, |e| e.clone())
    }

    /// `x * M` for a scalar variable and fixed Hermitian `M`.
    pub fn scalar_times(v: ScalarVar, m: CMat) -> Self {
        Self {
            dim: m.nrows(),
            constant: CMat::zeros(m.nrows(), m.nrows()),
            terms: alloc::vec![(v.index, m)],
        }
    }

    /// Place an affine scalar at position `(r, r)` of a `dim x dim` matrix.
    pub fn scalar_at(s: &AffineScalar, dim: usize, r: usize) -> Self {
        let unit = |a: f64| {
            let mut m = CMat::zeros(dim, dim);
            m[(r, r)] = Complex64::new(a, 0.0);
            m
        };
        Self {
            dim,
            constant: unit(s.constant),
            terms: s.terms.iter().map(|&(i, a)| (i, unit(a))).collect(),
        }
    }

    pub fn add(mut self, other: &Self) -> Self {
        self.add_scaled(other, 1.0);
        self
    }

    pub fn add_scaled(&mut self, other: &Self, factor: f64) {
        assert_eq!(self.dim, other.dim, "affine Hermitian size mismatch");
        self.constant += other.constant.scale(factor);
        self.terms
            .extend(other.terms.iter().map(|(i, m)| (*i, m.scale(factor))));
    }

    pub fn scale(mut self, factor: f64) -> Self {
        self.constant = self.constant.scale(factor);
        for t in &mut self.terms {
            t.1 = t.1.scale(factor);
        }
        self
    }

    /// Apply a fixed linear map to every coefficient (e.g. congruence or bordering).
    pub fn map(&self, dim: usize, f: impl Fn(&CMat) -> CMat) -> Self {
        Self {
            dim,
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(i, m)| (*i, f(m))).collect(),
        }
    }

    /// Real functional of the expression (e.g. trace or a quadratic form).
    pub fn functional(&self, f: impl Fn(&CMat) -> f64) -> AffineScalar {
        AffineScalar {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(i, m)| (*i, f(m))).collect(),
        }
    }

    /// Vector-valued linear image (e.g. `X -> X h`).
    pub fn apply_vec(&self, f: impl Fn(&CMat) -> CVec) -> AffineVector {
        AffineVector {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(i, m)| (*i, f(m))).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        let mut out = self.constant.clone();
        for (i, m) in &self.terms {
            if x[*i] != 0.0 {
                out += m.scale(x[*i]);
            }
        }
        out
    }

    pub fn compress(&mut self) {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, CMat)> = Vec::with_capacity(self.terms.len());
        for (i, m) in self.terms.drain(..) {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += m,
                _ => out.push((i, m)),
            }
        }
        out.retain(|t| t.1.iter().any(|z| z.re != 0.0 || z.im != 0.0));
        self.terms = out;
    }
}

/// `constant + sum_i x_i f_i` with complex vectors of a common length.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineVector {
    pub constant: CVec,
    pub terms: Vec<(usize, CVec)>,
}

impl AffineVector {
    pub fn len(&self) -> usize {
        self.constant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constant.is_empty()
    }

    pub fn constant(v: CVec) -> Self {
        Self {
            constant: v,
            terms: Vec::new(),
        }
    }

    /// Stack a sequence of affine pieces vertically.
    pub fn stack(parts: &[AffineVector]) -> Self {
        let len: usize = parts.iter().map(|p| p.len()).sum();
        let mut constant = CVec::zeros(len);
        let mut terms = Vec::new();
        let mut offset = 0;
        for p in parts {
            constant.rows_mut(offset, p.len()).copy_from(&p.constant);
            for (i, v) in &p.terms {
                let mut full = CVec::zeros(len);
                full.rows_mut(offset, p.len()).copy_from(v);
                terms.push((*i, full));
            }
            offset += p.len();
        }
        let mut out = Self { constant, terms };
        out.compress();
        out
    }

    /// Affine scalar lifted to a length-1 vector.
    pub fn from_scalar(s: &AffineScalar) -> Self {
        let one = |a: f64| CVec::from_element(1, Complex64::new(a, 0.0));
        Self {
            constant: one(s.constant),
            terms: s.terms.iter().map(|&(i, a)| (i, one(a))).collect(),
        }
    }

    pub fn scale(mut self, factor: f64) -> Self {
        self.constant = self.constant.scale(factor);
        for t in &mut self.terms {
            t.1 = t.1.scale(factor);
        }
        self
    }

    pub fn eval(&self, x: &[f64]) -> CVec {
        let mut out = self.constant.clone();
        for (i, v) in &self.terms {
            if x[*i] != 0.0 {
                out += v.scale(x[*i]);
            }
        }
        out
    }

    pub fn compress(&mut self) {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, CVec)> = Vec::with_capacity(self.terms.len());
        for (i, v) in self.terms.drain(..) {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => out.push((i, v)),
            }
        }
        out.retain(|t| t.1.iter().any(|z| z.re != 0.0 || z.im != 0.0));
        self.terms = out;
    }
}

/// Column-stacking `vec(.)` of a square matrix.
pub fn vec_columns(m: &CMat) -> CVec {
    CVec::from_iterator(m.len(), m.iter().copied())
}
