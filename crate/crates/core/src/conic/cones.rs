//! Cone primitives for the interior-point solver: scalings, Jordan-algebra
//! operations and step-length computations.
//!
//! Symmetric cones (nonnegative orthant, second-order cone, Hermitian PSD cone in
//! `hvec` coordinates) use Nesterov-Todd scaling `W` with `W z = W^{-T} s = lambda`.
//! The exponential cone is nonsymmetric; it is scaled with the Hessian of the dual
//! barrier, `W^T W = mu * grad^2 f*(z)`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Cholesky;

use crate::linalg::{hermitian_eigenvalues, hmat, hvec, CMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cone {
    NonNeg(usize),
    Soc(usize),
    /// Hermitian PSD cone of order `n`, stored as `hvec` (length `n^2`).
    Psd(usize),
    /// `{(x, y, z) : y > 0, y exp(x / y) <= z}` (closure).
    Exp,
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::NonNeg(d) | Cone::Soc(d) => d,
            Cone::Psd(n) => n * n,
            Cone::Exp => 3,
        }
    }

    pub fn degree(&self) -> usize {
        match *self {
            Cone::NonNeg(d) => d,
            Cone::Soc(_) => 1,
            Cone::Psd(n) => n,
            Cone::Exp => 3,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self, Cone::Exp)
    }

    /// Initial interior point (identity element, or the central point of the exp cone).
    pub fn unit(&self, out: &mut [f64]) {
        out.fill(0.0);
        match *self {
            Cone::NonNeg(_) => out.fill(1.0),
            Cone::Soc(_) => out[0] = 1.0,
            Cone::Psd(n) => {
                let mut k = 0;
                for j in 0..n {
                    k += 2 * j;
                    out[k] = 1.0;
                    k += 1;
                }
            }
            Cone::Exp => out.copy_from_slice(&EXP_CENTRAL),
        }
    }
}

/// Point on the central ray of the exponential cone and its dual: `s = -grad f*(s)`.
pub(crate) const EXP_CENTRAL: [f64; 3] = [-1.051383945322714, 0.556409619469370, 1.258967884768947];

fn soc_jnorm_sq(u: &[f64]) -> f64 {
    let r = libm::sqrt(u[1..].iter().map(|a| a * a).sum::<f64>());
    (u[0] - r) * (u[0] + r)
}

/// Nesterov-Todd (or dual-barrier) scaling for one cone block.
#[derive(Debug, Clone)]
pub(crate) enum Scaling {
    NonNeg {
        d: Vec<f64>,
        lambda: Vec<f64>,
    },
    Soc {
        beta: f64,
        v: Vec<f64>,
        lambda: Vec<f64>,
    },
    Psd {
        n: usize,
        r: CMat,
        rinv: CMat,
        lambda: Vec<f64>,
    },
    Exp {
        /// Lower Cholesky factor of `mu * grad^2 f*(z)`; `W = L^T`.
        l: [[f64; 3]; 3],
    },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ScalingError;

impl Scaling {
    pub fn new(cone: Cone, s: &[f64], z: &[f64], mu: f64) -> Result<Self, ScalingError> {
        match cone {
            Cone::NonNeg(_) => {
                if s.iter().chain(z).any(|&a| a <= 0.0 || !a.is_finite()) {
                    return Err(ScalingError);
                }
                let d = s.iter().zip(z).map(|(a, b)| libm::sqrt(a / b)).collect();
                let lambda = s.iter().zip(z).map(|(a, b)| libm::sqrt(a * b)).collect();
                Ok(Scaling::NonNeg { d, lambda })
            }
            Cone::Soc(dim) => {
                let js = soc_jnorm_sq(s);
                let jz = soc_jnorm_sq(z);
                if js <= 0.0 || jz <= 0.0 || s[0] <= 0.0 || z[0] <= 0.0 {
                    return Err(ScalingError);
                }
                let aa = libm::sqrt(js);
                let bb = libm::sqrt(jz);
                let beta = libm::sqrt(aa / bb);
                let sz: f64 = s.iter().zip(z).map(|(a, b)| a * b).sum();
                let gamma = libm::sqrt((sz / (aa * bb) + 1.0) / 2.0);
                let mut w = vec![0.0; dim];
                w[0] = (s[0] / aa + z[0] / bb) / (2.0 * gamma);
                for i in 1..dim {
                    w[i] = (s[i] / aa - z[i] / bb) / (2.0 * gamma);
                }
                let denom = libm::sqrt(2.0 * (w[0] + 1.0));
                let mut v = w;
                v[0] += 1.0;
                for a in &mut v {
                    *a /= denom;
                }
                let mut sc = Scaling::Soc {
                    beta,
                    v,
                    lambda: vec![0.0; dim],
                };
                let mut lambda = vec![0.0; dim];
                sc.apply_w(z, &mut lambda);
                if let Scaling::Soc { lambda: l, .. } = &mut sc {
                    *l = lambda;
                }
                Ok(sc)
            }
            Cone::Psd(n) => {
                let smat = hmat(s, n);
                let zmat = hmat(z, n);
                let l1 = Cholesky::new(smat).ok_or(ScalingError)?.unpack();
                let l2 = Cholesky::new(zmat).ok_or(ScalingError)?.unpack();
                let prod = l2.adjoint() * &l1;
                let svd = prod.svd(true, true);
                let (u, vt) = match (svd.u, svd.v_t) {
                    (Some(u), Some(vt)) => (u, vt),
                    _ => return Err(ScalingError),
                };
                let _ = u;
                let lambda: Vec<f64> = svd.singular_values.iter().copied().collect();
                if lambda.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
                    return Err(ScalingError);
                }
                let v = vt.adjoint();
                let mut r = &l1 * &v;
                for (j, &lj) in lambda.iter().enumerate() {
                    let f = 1.0 / libm::sqrt(lj);
                    for i in 0..n {
                        r[(i, j)] *= f;
                    }
                }
                let l1inv = l1
                    .solve_lower_triangular(&CMat::identity(n, n))
                    .ok_or(ScalingError)?;
                let mut rinv = vt * l1inv;
                for (i, &li) in lambda.iter().enumerate() {
                    let f = libm::sqrt(li);
                    for j in 0..n {
                        rinv[(i, j)] *= f;
                    }
                }
                Ok(Scaling::Psd { n, r, rinv, lambda })
            }
            Cone::Exp => {
                let zz = [z[0], z[1], z[2]];
                if !exp_dual_interior(&zz) {
                    return Err(ScalingError);
                }
                let l = exp_hessian_factor(&zz, mu).ok_or(ScalingError)?;
                Ok(Scaling::Exp { l })
            }
        }
    }

    /// `out = W x`
    pub fn apply_w(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Scaling::NonNeg { d, .. } => {
                for i in 0..x.len() {
                    out[i] = x[i] * d[i];
                }
            }
            Scaling::Soc { beta, v, .. } => {
                // W = beta (2 v v^T - J)
                let vx: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
                for i in 0..x.len() {
                    let jx = if i == 0 { x[0] } else { -x[i] };
                    out[i] = beta * (2.0 * v[i] * vx - jx);
                }
            }
            Scaling::Psd { n, r, .. } => {
                let m = hmat(x, *n);
                hvec(&(r.adjoint() * m * r), out);
            }
            Scaling::Exp { l } => {
                // W = L^T
                for i in 0..3 {
                    out[i] = (i..3).map(|k| l[k][i] * x[k]).sum();
                }
            }
        }
    }

    /// `out = W^T x`
    pub fn apply_wt(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Scaling::NonNeg { .. } | Scaling::Soc { .. } => self.apply_w(x, out),
            Scaling::Psd { n, r, .. } => {
                let m = hmat(x, *n);
                hvec(&(r * m * r.adjoint()), out);
            }
            Scaling::Exp { l } => {
                for i in 0..3 {
                    out[i] = (0..=i).map(|k| l[i][k] * x[k]).sum();
                }
            }
        }
    }

    /// `out = W^{-1} x`
    pub fn apply_winv(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Scaling::NonNeg { d, .. } => {
                for i in 0..x.len() {
                    out[i] = x[i] / d[i];
                }
            }
            Scaling::Soc { beta, v, .. } => {
                // exact inverse of beta (2 v v^T - J) for the stored v
                let f = 2.0 / (2.0 * soc_jnorm_sq(v) - 1.0);
                let jv: Vec<f64> = v
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| if i == 0 { a } else { -a })
                    .collect();
                let jvx: f64 = jv.iter().zip(x).map(|(a, b)| a * b).sum();
                for i in 0..x.len() {
                    let jx = if i == 0 { x[0] } else { -x[i] };
                    out[i] = (f * jv[i] * jvx - jx) / beta;
                }
            }
            Scaling::Psd { n, rinv, .. } => {
                let m = hmat(x, *n);
                hvec(&(rinv.adjoint() * m * rinv), out);
            }
            Scaling::Exp { l } => {
                // solve L^T out = x
                for i in (0..3).rev() {
                    let mut acc = x[i];
                    for k in i + 1..3 {
                        acc -= l[k][i] * out[k];
                    }
                    out[i] = acc / l[i][i];
                }
            }
        }
    }

    /// `out = W^{-T} x`
    pub fn apply_wtinv(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Scaling::NonNeg { .. } | Scaling::Soc { .. } => self.apply_winv(x, out),
            Scaling::Psd { n, rinv, .. } => {
                let m = hmat(x, *n);
                hvec(&(rinv * m * rinv.adjoint()), out);
            }
            Scaling::Exp { l } => {
                // solve L out = x
                for i in 0..3 {
                    let mut acc = x[i];
                    for k in 0..i {
                        acc -= l[i][k] * out[k];
                    }
                    out[i] = acc / l[i][i];
                }
            }
        }
    }

    /// Scaled point `lambda` in vector form (symmetric cones only).
    pub fn lambda(&self, out: &mut [f64]) {
        match self {
            Scaling::NonNeg { lambda, .. } | Scaling::Soc { lambda, .. } => {
                out.copy_from_slice(lambda)
            }
            Scaling::Psd { n, lambda, .. } => {
                out.fill(0.0);
                let mut k = 0;
                for j in 0..*n {
                    k += 2 * j;
                    out[k] = lambda[j];
                    k += 1;
                }
            }
            Scaling::Exp { .. } => unreachable!("exp cone has no NT scaled point"),
        }
    }

    /// Solve `lambda o x = v` in the Jordan algebra of the cone.
    pub fn lambda_div(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::NonNeg { lambda, .. } => {
                for i in 0..v.len() {
                    out[i] = v[i] / lambda[i];
                }
            }
            Scaling::Soc { lambda, .. } => {
                let jl = soc_jnorm_sq(lambda);
                let l1v: f64 = lambda[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
                let x0 = (lambda[0] * v[0] - l1v) / jl;
                out[0] = x0;
                for i in 1..v.len() {
                    out[i] = (v[i] - x0 * lambda[i]) / lambda[0];
                }
            }
            Scaling::Psd { n, lambda, .. } => {
                let mut m = hmat(v, *n);
                for j in 0..*n {
                    for i in 0..*n {
                        m[(i, j)] *= 2.0 / (lambda[i] + lambda[j]);
                    }
                }
                hvec(&m, out);
            }
            Scaling::Exp { .. } => unreachable!("exp cone has no Jordan algebra"),
        }
    }

    /// Largest `alpha` with `lambda + alpha * d` in the cone (may be infinite).
    pub fn max_step(&self, d: &[f64]) -> f64 {
        match self {
            Scaling::NonNeg { lambda, .. } => {
                let mut alpha = f64::INFINITY;
                for (l, di) in lambda.iter().zip(d) {
                    if *di < 0.0 {
                        alpha = alpha.min(-l / di);
                    }
                }
                alpha
            }
            Scaling::Soc { lambda, .. } => soc_max_step(lambda, d),
            Scaling::Psd { n, lambda, .. } => {
                let mut m = hmat(d, *n);
                for j in 0..*n {
                    for i in 0..*n {
                        m[(i, j)] /= libm::sqrt(lambda[i] * lambda[j]);
                    }
                }
                let emin = hermitian_eigenvalues(&m)[0];
                if emin >= 0.0 {
                    f64::INFINITY
                } else {
                    -1.0 / emin
                }
            }
            Scaling::Exp { .. } => unreachable!("exp cone step handled by line search"),
        }
    }
}

/// Strict interior test for a PSD block given in `hvec` form.
pub(crate) fn psd_interior(v: &[f64], n: usize) -> bool {
    v.iter().all(|a| a.is_finite()) && Cholesky::new(hmat(v, n)).is_some()
}

/// Jordan product `u o v` for a symmetric cone.
pub(crate) fn jordan_product(cone: Cone, u: &[f64], v: &[f64], out: &mut [f64]) {
    match cone {
        Cone::NonNeg(_) => {
            for i in 0..u.len() {
                out[i] = u[i] * v[i];
            }
        }
        Cone::Soc(_) => {
            out[0] = u.iter().zip(v).map(|(a, b)| a * b).sum();
            for i in 1..u.len() {
                out[i] = u[0] * v[i] + v[0] * u[i];
            }
        }
        Cone::Psd(n) => {
            let a = hmat(u, n);
            let b = hmat(v, n);
            let p = &a * &b;
            hvec(&(&p + p.adjoint()).scale(0.5), out);
        }
        Cone::Exp => unreachable!("exp cone has no Jordan algebra"),
    }
}

fn soc_max_step(x: &[f64], d: &[f64]) -> f64 {
    // roots of J(x + a d) = 0
    let a = soc_jnorm_sq(d);
    let b = 2.0 * (x[0] * d[0] - x[1..].iter().zip(&d[1..]).map(|(p, q)| p * q).sum::<f64>());
    let c = soc_jnorm_sq(x).max(0.0);
    let disc = b * b - 4.0 * a * c;
    let mut alpha = f64::INFINITY;
    if (a > 0.0 && b > 0.0) || disc < 0.0 {
        // stays inside (along the ray the J-norm never vanishes)
    } else if a == 0.0 {
        if b < 0.0 {
            alpha = -c / b;
        }
    } else {
        let sq = libm::sqrt(disc);
        let t = if b >= 0.0 {
            -0.5 * (b + sq)
        } else {
            -0.5 * (b - sq)
        };
        for r in [t / a, if t != 0.0 { c / t } else { f64::INFINITY }] {
            if r > 0.0 && r < alpha {
                alpha = r;
            }
        }
    }
    // the first component must stay positive as well
    if d[0] < 0.0 {
        alpha = alpha.min(-x[0] / d[0]);
    }
    alpha
}

pub(crate) fn exp_primal_interior(s: &[f64]) -> bool {
    let (x, y, z) = (s[0], s[1], s[2]);
    y > 0.0 && z > 0.0 && {
        let t = y * libm::log(z / y) - x;
        t > 0.0 && t.is_finite()
    }
}

pub(crate) fn exp_dual_interior(z: &[f64]) -> bool {
    let (u, v, w) = (z[0], z[1], z[2]);
    u < 0.0 && w > 0.0 && {
        let psi = v - u - u * libm::log(-w / u);
        psi > 0.0 && psi.is_finite()
    }
}

/// Gradient and Hessian of the dual barrier
/// `f*(u, v, w) = -log(v - u - u log(-w/u)) - log(-u) - log(w)`.
pub(crate) fn exp_dual_grad_hess(z: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let (u, v, w) = (z[0], z[1], z[2]);
    let l = libm::log(-w / u);
    let psi = v - u - u * l;
    let g = [-l, 1.0, -u / w];
    let grad = [-g[0] / psi - 1.0 / u, -g[1] / psi, -g[2] / psi - 1.0 / w];
    // Hessian of psi (only u/w entries are nonzero)
    let huu = 1.0 / u;
    let huw = -1.0 / w;
    let hww = u / (w * w);
    let mut h = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            h[i][j] = g[i] * g[j] / (psi * psi);
        }
    }
    h[0][0] += -huu / psi + 1.0 / (u * u);
    h[0][2] += -huw / psi;
    h[2][0] += -huw / psi;
    h[2][2] += -hww / psi + 1.0 / (w * w);
    (grad, h)
}

/// Triangular factor `L` with `L L^T = mu grad^2 f*(z)`.
///
/// The Hessian is the Gram matrix of four rows (the gradient of `psi`, the rank-one
/// curvature of `psi`, and the two log barriers), so `L` is taken from a QR
/// factorisation of those rows instead of a Cholesky factorisation of the Hessian.
/// This keeps the factor accurate when `psi` is tiny near the boundary.
pub(crate) fn exp_hessian_factor(z: &[f64; 3], mu: f64) -> Option<[[f64; 3]; 3]> {
    let (u, v, w) = (z[0], z[1], z[2]);
    let l = libm::log(-w / u);
    let psi = v - u - u * l;
    let rows = [
        [-l / psi, 1.0 / psi, -u / (w * psi)],
        [1.0 / libm::sqrt(-u * psi), 0.0, libm::sqrt(-u / psi) / w],
        [-1.0 / u, 0.0, 0.0],
        [0.0, 0.0, 1.0 / w],
    ];
    let sm = libm::sqrt(mu);
    let b = nalgebra::Matrix4x3::from_fn(|i, j| sm * rows[i][j]);
    if !b.iter().all(|x| x.is_finite()) {
        return None;
    }
    let r = b.qr().r();
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            out[i][j] = r[(j, i)];
        }
        if out[i][i] == 0.0 || !out[i][i].is_finite() {
            return None;
        }
    }
    Some(out)
}
