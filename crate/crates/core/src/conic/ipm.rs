//! Homogeneous self-dual interior-point method.
//!
//! Standard form: `min c'x  s.t.  G x + s = h, s in K, A x = b`, embedded as
//! `A'y + G'z + c tau = 0`, `A x = b tau`, `G x + s = h tau`,
//! `c'x + b'y + h'z + kappa = 0`. Search directions come from a Mehrotra
//! predictor-corrector on the scaled normal equations.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::LU;

use super::cones::{
    exp_dual_grad_hess, exp_dual_interior, exp_primal_interior, jordan_product, psd_interior, Cone, Scaling,
};
use super::{ConicProblem, ConicSolution, Constraint, Sense, SolveStatus, SolverSettings};
use crate::linalg::{hvec, RMat};

#[derive(Debug, Clone)]
struct Block {
    cone: Cone,
    start: usize,
    /// Columns of `G` with a nonzero entry in this block.
    cols: Vec<usize>,
}

impl Block {
    fn range(&self) -> core::ops::Range<usize> {
        self.start..self.start + self.cone.dim()
    }
}

/// Problem data in standard form (minimisation).
#[derive(Debug, Clone)]
struct StandardForm {
    c: Vec<f64>,
    g: RMat,
    h: Vec<f64>,
    a: RMat,
    b: Vec<f64>,
    blocks: Vec<Block>,
}

impl StandardForm {
    fn build(p: &ConicProblem) -> StandardForm {
        let n = p.num_coords();
        let sign = match p.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut c = vec![0.0; n];
        for &(i, a) in &p.objective.terms {
            c[i] += sign * a;
        }

        // rows are collected as (constant, sparse coefficients) with s = row(x) in K
        let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
        let mut cones: Vec<Cone> = Vec::new();
        let mut eq_rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();

        let mut nonneg = 0;
        for con in &p.constraints {
            if let Constraint::NonNeg { expr, .. } = con {
                rows.push((expr.constant, expr.terms.clone()));
                nonneg += 1;
            }
        }
        if nonneg > 0 {
            cones.push(Cone::NonNeg(nonneg));
        }
        for con in &p.constraints {
            match con {
                Constraint::NonNeg { .. } => {}
                Constraint::Zero { expr, .. } => eq_rows.push((expr.constant, expr.terms.clone())),
                Constraint::Exp(e) => {
                    for s in [&e.x, &e.y, &e.z] {
                        rows.push((s.constant, s.terms.clone()));
                    }
                    cones.push(Cone::Exp);
                }
                Constraint::Soc(sb) => {
                    rows.push((sb.bound.constant, sb.bound.terms.clone()));
                    let mut dim = 1;
                    let len = sb.vector.len();
                    for part in 0..2 {
                        for r in 0..len {
                            let pick =
                                |z: num_complex::Complex64| if part == 0 { z.re } else { z.im };
                            let constant = pick(sb.vector.constant[r]);
                            let terms: Vec<(usize, f64)> = sb
                                .vector
                                .terms
                                .iter()
                                .map(|(i, v)| (*i, pick(v[r])))
                                .filter(|t| t.1 != 0.0)
                                .collect();
                            if constant != 0.0 || !terms.is_empty() {
                                rows.push((constant, terms));
                                dim += 1;
                            }
                        }
                    }
                    cones.push(Cone::Soc(dim));
                }
                Constraint::Lmi(l) => {
                    let d = l.expr.dim;
                    let mut buf = vec![0.0; d * d];
                    hvec(&l.expr.constant, &mut buf);
                    let mut block: Vec<(f64, Vec<(usize, f64)>)> =
                        buf.iter().map(|&v| (v, Vec::new())).collect();
                    for (i, m) in &l.expr.terms {
                        hvec(m, &mut buf);
                        for (r, &v) in buf.iter().enumerate() {
                            if v != 0.0 {
                                block[r].1.push((*i, v));
                            }
                        }
                    }
                    rows.extend(block);
                    cones.push(Cone::Psd(d));
                }
            }
        }

        let m = rows.len();
        let mut g = RMat::zeros(m, n);
        let mut h = vec![0.0; m];
        for (r, (constant, terms)) in rows.iter().enumerate() {
            h[r] = *constant;
            for &(i, a) in terms {
                g[(r, i)] -= a;
            }
        }
        let pe = eq_rows.len();
        let mut a = RMat::zeros(pe, n);
        let mut b = vec![0.0; pe];
        for (r, (constant, terms)) in eq_rows.iter().enumerate() {
            b[r] = -constant;
            for &(i, v) in terms {
                a[(r, i)] += v;
            }
        }
        let mut blocks = Vec::with_capacity(cones.len());
        let mut start = 0;
        for cone in cones {
            blocks.push(Block {
                cone,
                start,
                cols: Vec::new(),
            });
            start += cone.dim();
        }
        let mut sf = StandardForm {
            c,
            g,
            h,
            a,
            b,
            blocks,
        };
        sf.refresh_columns();
        sf
    }

    fn refresh_columns(&mut self) {
        let m = self.g.nrows();
        let data = self.g.as_slice();
        for blk in &mut self.blocks {
            let r = blk.range();
            blk.cols = (0..self.g.ncols())
                .filter(|&j| {
                    data[j * m + r.start..j * m + r.end]
                        .iter()
                        .any(|&v| v != 0.0)
                })
                .collect();
        }
    }

    fn n(&self) -> usize {
        self.c.len()
    }
    fn m(&self) -> usize {
        self.h.len()
    }
    fn p(&self) -> usize {
        self.b.len()
    }
    fn degree(&self) -> usize {
        self.blocks.iter().map(|b| b.cone.degree()).sum()
    }
}

/// Diagonal scaling `G~ = E G D`, `A~ = F A D`, `c~ = sigma D c`.
#[derive(Debug, Clone)]
struct Equilibration {
    d: Vec<f64>,
    e: Vec<f64>,
    f: Vec<f64>,
    sigma: f64,
}

impl Equilibration {
    fn identity(sf: &StandardForm) -> Self {
        Self {
            d: vec![1.0; sf.n()],
            e: vec![1.0; sf.m()],
            f: vec![1.0; sf.p()],
            sigma: 1.0,
        }
    }

    fn compute(sf: &StandardForm) -> (Self, StandardForm) {
        let mut eq = Self::identity(sf);
        let mut s = sf.clone();
        let clamp = |v: f64| {
            if v <= 0.0 {
                1.0
            } else {
                1.0 / libm::sqrt(v.clamp(1e-4, 1e4))
            }
        };
        for _ in 0..12 {
            let n = s.n();
            let mut col = vec![0.0; n];
            for j in 0..n {
                let mut mx = s.g.column(j).amax();
                if s.p() > 0 {
                    mx = mx.max(s.a.column(j).amax());
                }
                col[j] = clamp(mx);
            }
            for j in 0..n {
                s.g.column_mut(j).scale_mut(col[j]);
                s.a.column_mut(j).scale_mut(col[j]);
                eq.d[j] *= col[j];
            }
            for blk in &s.blocks {
                let r = blk.range();
                let mx = s.g.rows(r.start, r.len()).amax();
                let f = clamp(mx);
                s.g.rows_mut(r.start, r.len()).scale_mut(f);
                for i in r {
                    eq.e[i] *= f;
                }
            }
            for i in 0..s.p() {
                let f = clamp(s.a.row(i).amax());
                s.a.row_mut(i).scale_mut(f);
                eq.f[i] *= f;
            }
        }
        for i in 0..s.m() {
            s.h[i] = sf.h[i] * eq.e[i];
        }
        for i in 0..s.p() {
            s.b[i] = sf.b[i] * eq.f[i];
        }
        let mut cmax: f64 = 0.0;
        for j in 0..s.n() {
            s.c[j] = sf.c[j] * eq.d[j];
            cmax = cmax.max(s.c[j].abs());
        }
        eq.sigma = if cmax > 0.0 {
            (1.0 / cmax).clamp(1e-4, 1e4)
        } else {
            1.0
        };
        for v in &mut s.c {
            *v *= eq.sigma;
        }
        s.refresh_columns();
        (eq, s)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn mat_vec(m: &RMat, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    let data = m.as_slice();
    let rows = m.nrows();
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            axpy(xj, &data[j * rows..(j + 1) * rows], &mut out);
        }
    }
    out
}

fn mat_tvec(m: &RMat, x: &[f64]) -> Vec<f64> {
    let data = m.as_slice();
    let rows = m.nrows();
    (0..m.ncols())
        .map(|j| dot(&data[j * rows..(j + 1) * rows], x))
        .collect()
}

/// Factorized scaled KKT system for one iteration, in augmented form
/// `[[0, A', Ghat'], [A, 0, 0], [Ghat, 0, -I]]` with `Ghat = W^{-T} G`.
struct Kkt<'a> {
    sf: &'a StandardForm,
    scalings: Vec<Scaling>,
    /// `W^{-T} G` restricted to each block's columns.
    ghat: Vec<RMat>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    /// `W dz`
    dzt: Vec<f64>,
    dz: Vec<f64>,
}

impl<'a> Kkt<'a> {
    fn new(sf: &'a StandardForm, scalings: Vec<Scaling>) -> Option<Self> {
        let n = sf.n();
        let m = sf.m();
        let p = sf.p();
        let data = sf.g.as_slice();
        let mut ghat = Vec::with_capacity(sf.blocks.len());
        let mut k = RMat::zeros(n + p + m, n + p + m);
        let mut gmax: f64 = 0.0;
        for (blk, sc) in sf.blocks.iter().zip(&scalings) {
            let r = blk.range();
            let mut gb = RMat::zeros(r.len(), blk.cols.len());
            for (c, &j) in blk.cols.iter().enumerate() {
                let col = &data[j * m + r.start..j * m + r.end];
                sc.apply_wtinv(col, gb.column_mut(c).as_mut_slice());
                for (i, &v) in gb.column(c).iter().enumerate() {
                    k[(n + p + r.start + i, j)] = v;
                    k[(j, n + p + r.start + i)] = v;
                    gmax = gmax.max(v.abs());
                }
            }
            ghat.push(gb);
        }
        for i in 0..p {
            for j in 0..n {
                let v = sf.a[(i, j)];
                k[(n + i, j)] = v;
                k[(j, n + i)] = v;
            }
        }
        let delta = 1e-13 * gmax.max(1.0);
        for i in 0..n {
            k[(i, i)] += delta;
        }
        for i in 0..p {
            k[(n + i, n + i)] -= delta;
        }
        for i in 0..m {
            k[(n + p + i, n + p + i)] = -1.0;
        }
        let lu = k.lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(Self {
            sf,
            scalings,
            ghat,
            lu,
        })
    }

    fn ghat_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.sf.m()];
        for (blk, gb) in self.sf.blocks.iter().zip(&self.ghat) {
            let xb: Vec<f64> = blk.cols.iter().map(|&j| x[j]).collect();
            let y = mat_vec(gb, &xb);
            out[blk.range()].copy_from_slice(&y);
        }
        out
    }

    fn ghat_tmul(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.sf.n()];
        for (blk, gb) in self.sf.blocks.iter().zip(&self.ghat) {
            let y = mat_tvec(gb, &z[blk.range()]);
            for (k, &j) in blk.cols.iter().enumerate() {
                out[j] += y[k];
            }
        }
        out
    }

    /// Unregularized KKT operator.
    fn apply(&self, dx: &[f64], dy: &[f64], dz: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut top = self.ghat_tmul(dz);
        if self.sf.p() > 0 {
            axpy(1.0, &mat_tvec(&self.sf.a, dy), &mut top);
        }
        let mid = mat_vec(&self.sf.a, dx);
        let mut bottom = self.ghat_mul(dx);
        axpy(-1.0, dz, &mut bottom);
        (top, mid, bottom)
    }

    fn raw_solve(&self, r1: &[f64], r2: &[f64], r3: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, p) = (r1.len(), r2.len());
        let mut rhs = nalgebra::DVector::zeros(n + p + r3.len());
        rhs.rows_mut(0, n).copy_from_slice(r1);
        rhs.rows_mut(n, p).copy_from_slice(r2);
        rhs.rows_mut(n + p, r3.len()).copy_from_slice(r3);
        let sol = self.lu.solve(&rhs).unwrap_or(rhs);
        let s = sol.as_slice();
        (s[..n].to_vec(), s[n..n + p].to_vec(), s[n + p..].to_vec())
    }

    /// Solve `A'dy + Ghat'dzt = rx`, `A dx = ry`, `Ghat dx - dzt = rz`.
    fn solve(&self, rx: &[f64], ry: &[f64], rz_scaled: &[f64]) -> Direction {
        let (mut dx, mut dy, mut dzt) = self.raw_solve(rx, ry, rz_scaled);
        let scale = norm(rx) + norm(ry) + norm(rz_scaled) + 1e-300;
        for _ in 0..5 {
            let (t, mid, b) = self.apply(&dx, &dy, &dzt);
            let e1: Vec<f64> = rx.iter().zip(&t).map(|(a, b)| a - b).collect();
            let e2: Vec<f64> = ry.iter().zip(&mid).map(|(a, b)| a - b).collect();
            let e3: Vec<f64> = rz_scaled.iter().zip(&b).map(|(a, b)| a - b).collect();
            let err = (norm(&e1) + norm(&e2) + norm(&e3)) / scale;
            if err < 1e-15 {
                break;
            }
            let (cx, cy, cz) = self.raw_solve(&e1, &e2, &e3);
            axpy(1.0, &cx, &mut dx);
            axpy(1.0, &cy, &mut dy);
            axpy(1.0, &cz, &mut dzt);
        }
        let mut dz = vec![0.0; dzt.len()];
        for (blk, sc) in self.sf.blocks.iter().zip(&self.scalings) {
            let r = blk.range();
            sc.apply_winv(&dzt[r.clone()], &mut dz[r]);
        }
        Direction { dx, dy, dzt, dz }
    }

    fn scale_wtinv(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (blk, sc) in self.sf.blocks.iter().zip(&self.scalings) {
            let r = blk.range();
            sc.apply_wtinv(&v[r.clone()], &mut out[r]);
        }
        out
    }
}

/// Normalized certificate residual accepted when the iteration stalls.
const REDUCED_CERT: f64 = 1e-3;

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    z: Vec<f64>,
    tau: f64,
    kappa: f64,
}

#[derive(Clone)]
struct Metrics {
    pres: f64,
    dres: f64,
    gap: f64,
    pcost: f64,
}

enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    /// Progress stopped; best iterate meets the reduced tolerance.
    Reduced(String),
    /// Progress stopped with an infeasibility certificate of reduced accuracy.
    ReducedInfeasible(String),
    Stalled(String),
}

/// Solve a conic problem. Returns the primal point in problem coordinates.
pub fn solve(problem: &ConicProblem, settings: &SolverSettings) -> ConicSolution {
    #[cfg(feature = "std")]
    let start = std::time::Instant::now();
    let orig = StandardForm::build(problem);
    let (eq, scaled) = if settings.equilibrate {
        Equilibration::compute(&orig)
    } else {
        (Equilibration::identity(&orig), orig.clone())
    };
    let (outcome, it, metrics, iters) = run(&orig, &scaled, &eq, settings);
    let x: Vec<f64> = (0..orig.n()).map(|j| eq.d[j] * it.x[j] / it.tau).collect();
    let (status, diagnostic) = match outcome {
        Outcome::Optimal => (SolveStatus::Optimal, String::new()),
        Outcome::Infeasible => (
            SolveStatus::Infeasible,
            String::from("primal infeasibility certificate"),
        ),
        Outcome::Unbounded => (
            SolveStatus::NumericalFailure,
            String::from("dual infeasibility certificate (unbounded)"),
        ),
        Outcome::Reduced(msg) => (
            SolveStatus::Optimal,
            format!(
                "reduced accuracy (pres {:.2e}, dres {:.2e}, gap {:.2e}): {msg}",
                metrics.pres, metrics.dres, metrics.gap
            ),
        ),
        Outcome::ReducedInfeasible(msg) => (
            SolveStatus::Infeasible,
            format!("primal infeasibility certificate of reduced accuracy: {msg}"),
        ),
        Outcome::Stalled(msg) => (SolveStatus::NumericalFailure, msg),
    };
    let objective = if status == SolveStatus::Infeasible {
        f64::NAN
    } else {
        problem.objective.eval(&x)
    };
    let _ = metrics.pcost;
    ConicSolution {
        status,
        x,
        objective,
        primal_residual: metrics.pres,
        dual_residual: metrics.dres,
        gap: metrics.gap,
        iterations: iters,
        #[cfg(feature = "std")]
        solve_time: Some(start.elapsed()),
        #[cfg(not(feature = "std"))]
        solve_time: None,
        diagnostic,
    }
}

fn metrics(
    orig: &StandardForm,
    eq: &Equilibration,
    it: &Iterate,
    tol_cert: f64,
) -> (Metrics, Option<Outcome>, f64) {
    let n = orig.n();
    let m = orig.m();
    let p = orig.p();
    let xr: Vec<f64> = (0..n).map(|j| eq.d[j] * it.x[j]).collect();
    let sr: Vec<f64> = (0..m).map(|i| it.s[i] / eq.e[i]).collect();
    let zr: Vec<f64> = (0..m).map(|i| eq.e[i] * it.z[i] / eq.sigma).collect();
    let yr: Vec<f64> = (0..p).map(|i| eq.f[i] * it.y[i] / eq.sigma).collect();
    let tau = it.tau;

    let gx = mat_vec(&orig.g, &xr);
    let ax = mat_vec(&orig.a, &xr);
    let mut dual = mat_tvec(&orig.g, &zr);
    if p > 0 {
        axpy(1.0, &mat_tvec(&orig.a, &yr), &mut dual);
    }
    let nh = norm(&orig.h);
    let nb = norm(&orig.b);
    let nc = norm(&orig.c);

    let r_eq: Vec<f64> = (0..p).map(|i| ax[i] / tau - orig.b[i]).collect();
    let r_cone: Vec<f64> = (0..m).map(|i| (gx[i] + sr[i]) / tau - orig.h[i]).collect();
    let r_dual: Vec<f64> = (0..n).map(|j| dual[j] / tau + orig.c[j]).collect();
    // normalised by the larger of the data and the terms that must cancel
    let pres = (norm(&r_eq) / (1.0 + nb).max(norm(&ax) / tau))
        .max(norm(&r_cone) / (1.0 + nh).max(norm(&gx) / tau));
    let dres = norm(&r_dual) / (1.0 + nc).max(norm(&dual) / tau);
    let pcost = dot(&orig.c, &xr) / tau;
    let gap = dot(&sr, &zr) / (tau * tau);

    let hz_by = dot(&orig.h, &zr) + dot(&orig.b, &yr);
    let cx = dot(&orig.c, &xr);
    let mut cert = None;
    let infeas_ratio = if hz_by < 0.0 {
        norm(&dual) / (-hz_by)
    } else {
        f64::INFINITY
    };
    if infeas_ratio <= tol_cert {
        cert = Some(Outcome::Infeasible);
    }
    if cx < 0.0 && cert.is_none() {
        let r1 = norm(&ax);
        let r2 = norm(&gx.iter().zip(&sr).map(|(a, b)| a + b).collect::<Vec<_>>());
        if r1.max(r2) / (-cx) <= tol_cert {
            cert = Some(Outcome::Unbounded);
        }
    }
    (
        Metrics {
            pres,
            dres,
            gap,
            pcost,
        },
        cert,
        infeas_ratio,
    )
}

fn run(
    orig: &StandardForm,
    sf: &StandardForm,
    eq: &Equilibration,
    settings: &SolverSettings,
) -> (Outcome, Iterate, Metrics, usize) {
    let n = sf.n();
    let m = sf.m();
    let p = sf.p();
    let nu = sf.degree() as f64;
    let mut it = Iterate {
        x: vec![0.0; n],
        y: vec![0.0; p],
        s: vec![0.0; m],
        z: vec![0.0; m],
        tau: 1.0,
        kappa: 1.0,
    };
    for blk in &sf.blocks {
        let r = blk.range();
        blk.cone.unit(&mut it.s[r.clone()]);
        blk.cone.unit(&mut it.z[r]);
    }
    let mut last = None;
    let mut stall = 0;
    let mut best: Option<(f64, Iterate, Metrics)> = None;
    let mut best_cert = f64::INFINITY;
    let mut since_best = 0;
    let mut min_tau = f64::INFINITY;
    let merit = |met: &Metrics, tol: f64, tol_gap: f64| {
        (met.pres / tol)
            .max(met.dres / tol)
            .max(met.gap / (tol_gap * met.pcost.abs().max(1.0)))
    };
    let finish = |why: String,
                  it: Iterate,
                  met: Metrics,
                  iter: usize,
                  best: Option<(f64, Iterate, Metrics)>,
                  best_cert: f64| {
        if best_cert <= REDUCED_CERT {
            return (Outcome::ReducedInfeasible(why), it, met, iter);
        }
        let reached = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if let Some((_, bit, bmet)) = best {
            if merit(&bmet, settings.tol_reduced, settings.tol_reduced) <= 1.0 {
                return (Outcome::Reduced(why), bit, bmet, iter);
            }
        }
        (
            Outcome::Stalled(format!(
                "{why} (best merit {reached:.1e}, best certificate {best_cert:.1e})"
            )),
            it,
            met,
            iter,
        )
    };
    for iter in 0..settings.max_iter {
        let (met, cert, ratio) = metrics(orig, eq, &it, settings.tol_cert);
        let score = merit(&met, settings.tol_feas, settings.tol_gap);
        let mut progress = false;
        if score.is_finite() {
            let prev = best.as_ref().map_or(f64::INFINITY, |b| b.0);
            if score < prev {
                best = Some((score, it.clone(), met.clone()));
                progress = score < 0.5 * prev;
            }
        }
        if ratio < 0.5 * best_cert {
            best_cert = ratio;
            progress = true;
        }
        if it.tau > 1e-10 && it.tau < 0.5 * min_tau {
            min_tau = it.tau;
            progress = true;
        }
        if progress {
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= 8 {
                return finish(
                    format!("no progress since iteration {}", iter - since_best),
                    it,
                    met,
                    iter,
                    best,
                    best_cert,
                );
            }
        }
        if met.pres <= settings.tol_feas
            && met.dres <= settings.tol_feas
            && met.gap <= settings.tol_gap * met.pcost.abs().max(1.0)
        {
            return (Outcome::Optimal, it, met, iter);
        }
        if let Some(c) = cert {
            return (c, it, met, iter);
        }

        // residuals in scaled space
        let mut r1 = mat_tvec(&sf.g, &it.z);
        if p > 0 {
            axpy(1.0, &mat_tvec(&sf.a, &it.y), &mut r1);
        }
        axpy(it.tau, &sf.c, &mut r1);
        let mut r2 = mat_vec(&sf.a, &it.x);
        axpy(-it.tau, &sf.b, &mut r2);
        let mut r3 = mat_vec(&sf.g, &it.x);
        axpy(1.0, &it.s, &mut r3);
        axpy(-it.tau, &sf.h, &mut r3);
        let r4 = dot(&sf.c, &it.x) + dot(&sf.b, &it.y) + dot(&sf.h, &it.z) + it.kappa;
        let mu = (dot(&it.s, &it.z) + it.tau * it.kappa) / (nu + 1.0);

        let mut scalings = Vec::with_capacity(sf.blocks.len());
        let mut bad = None;
        for blk in &sf.blocks {
            let r = blk.range();
            match Scaling::new(blk.cone, &it.s[r.clone()], &it.z[r], mu) {
                Ok(sc) => scalings.push(sc),
                Err(_) => {
                    bad = Some(blk.cone);
                    break;
                }
            }
        }
        if let Some(cone) = bad {
            return finish(
                format!("{cone:?} scaling failed at iteration {iter}"),
                it,
                met,
                iter,
                best,
                best_cert,
            );
        }
        let kkt = match Kkt::new(sf, scalings) {
            Some(k) => k,
            None => {
                return finish(
                    format!("KKT factorization failed at iteration {iter}"),
                    it,
                    met,
                    iter,
                    best,
                    best_cert,
                )
            }
        };
        let neg_c: Vec<f64> = sf.c.iter().map(|v| -v).collect();
        let u2 = kkt.solve(&neg_c, &sf.b, &kkt.scale_wtinv(&sf.h));
        let denom2 = dot(&sf.c, &u2.dx) + dot(&sf.b, &u2.dy) + dot(&sf.h, &u2.dz);

        // lambda for symmetric blocks
        let mut lambda = vec![0.0; m];
        for (blk, sc) in sf.blocks.iter().zip(&kkt.scalings) {
            if blk.cone.is_symmetric() {
                sc.lambda(&mut lambda[blk.range()]);
            }
        }

        let mut affine: Option<(Direction, f64, f64)> = None;
        let mut sigma = 0.0;
        let mut step_taken = 0.0;
        for phase in 0..2 {
            let eta = if phase == 0 { 1.0 } else { 1.0 - sigma };
            // W^{-T} r_s per block
            let mut rs_scaled = vec![0.0; m];
            let mut rs_exp = vec![0.0; m];
            for (bi, blk) in sf.blocks.iter().enumerate() {
                let r = blk.range();
                let sc = &kkt.scalings[bi];
                if blk.cone.is_symmetric() {
                    let lam = &lambda[r.clone()];
                    let d = r.len();
                    let mut ds = vec![0.0; d];
                    jordan_product(blk.cone, lam, lam, &mut ds);
                    for v in &mut ds {
                        *v = -*v;
                    }
                    if let (1, Some((aff, _, _))) = (phase, &affine) {
                        // -(W^{-T} ds_a) o (W dz_a) + sigma mu e
                        let wds: Vec<f64> =
                            (0..d).map(|i| -lam[i] - aff.dzt[r.start + i]).collect();
                        let mut corr = vec![0.0; d];
                        jordan_product(blk.cone, &wds, &aff.dzt[r.clone()], &mut corr);
                        let mut e = vec![0.0; d];
                        blk.cone.unit(&mut e);
                        for i in 0..d {
                            ds[i] += -corr[i] + sigma * mu * e[i];
                        }
                    }
                    sc.lambda_div(&ds, &mut rs_scaled[r]);
                } else {
                    let zz = [it.z[r.start], it.z[r.start + 1], it.z[r.start + 2]];
                    let (grad, _) = exp_dual_grad_hess(&zz);
                    let mut rs = [0.0; 3];
                    for i in 0..3 {
                        rs[i] = -it.s[r.start + i] - sigma * mu * grad[i];
                    }
                    rs_exp[r.clone()].copy_from_slice(&rs);
                    sc.apply_wtinv(&rs, &mut rs_scaled[r]);
                }
            }
            let dk = if phase == 0 {
                -it.tau * it.kappa
            } else {
                let (_, dta, dka) = affine.as_ref().map(|a| (0, a.1, a.2)).unwrap();
                -it.tau * it.kappa - dta * dka + sigma * mu
            };
            let d1: Vec<f64> = r1.iter().map(|v| -eta * v).collect();
            let d2: Vec<f64> = r2.iter().map(|v| -eta * v).collect();
            let d3: Vec<f64> = r3.iter().map(|v| -eta * v).collect();
            let d4 = -eta * r4;
            let mut rz = kkt.scale_wtinv(&d3);
            axpy(-1.0, &rs_scaled, &mut rz);
            let u1 = kkt.solve(&d1, &d2, &rz);
            let num =
                d4 - dk / it.tau - (dot(&sf.c, &u1.dx) + dot(&sf.b, &u1.dy) + dot(&sf.h, &u1.dz));
            let den = denom2 - it.kappa / it.tau;
            let dtau = num / den;
            let dkappa = (dk - it.kappa * dtau) / it.tau;
            let mut dir = u1;
            axpy(dtau, &u2.dx, &mut dir.dx);
            axpy(dtau, &u2.dy, &mut dir.dy);
            axpy(dtau, &u2.dzt, &mut dir.dzt);
            axpy(dtau, &u2.dz, &mut dir.dz);

            // ds and step length
            let mut ds = vec![0.0; m];
            let mut alpha = f64::INFINITY;
            if dtau < 0.0 {
                alpha = alpha.min(-it.tau / dtau);
            }
            if dkappa < 0.0 {
                alpha = alpha.min(-it.kappa / dkappa);
            }
            for (bi, blk) in sf.blocks.iter().enumerate() {
                let r = blk.range();
                let sc = &kkt.scalings[bi];
                if blk.cone.is_symmetric() {
                    let dst: Vec<f64> = r.clone().map(|i| rs_scaled[i] - dir.dzt[i]).collect();
                    alpha = alpha.min(sc.max_step(&dst));
                    alpha = alpha.min(sc.max_step(&dir.dzt[r.clone()]));
                    sc.apply_wt(&dst, &mut ds[r]);
                } else {
                    let mut ldz = [0.0; 3];
                    sc.apply_wt(&dir.dzt[r.clone()], &mut ldz);
                    for i in 0..3 {
                        ds[r.start + i] = rs_exp[r.start + i] - ldz[i];
                    }
                }
            }
            let has_exp = sf.blocks.iter().any(|b| !b.cone.is_symmetric());
            let mut alpha = if phase == 0 {
                alpha.min(1.0)
            } else {
                (0.99 * alpha).min(1.0)
            };
            if has_exp {
                let mut tries = 0;
                while tries < 60
                    && !exp_step_ok(sf, &it, &dir, &ds, dtau, dkappa, alpha, nu, phase == 1)
                {
                    alpha *= 0.8;
                    tries += 1;
                }
                if tries == 60 {
                    alpha = 0.0;
                }
            }
            if phase == 1 {
                let mut tries = 0;
                while tries < 30 && !psd_step_ok(sf, &it, &dir, &ds, alpha) {
                    alpha *= 0.8;
                    tries += 1;
                }
                if tries == 30 {
                    alpha = 0.0;
                }
            }
            if phase == 0 {
                let t = (1.0 - alpha).clamp(0.0, 1.0);
                sigma = t * t * t;
                affine = Some((dir, dtau, dkappa));
            } else {
                axpy(alpha, &dir.dx, &mut it.x);
                axpy(alpha, &dir.dy, &mut it.y);
                axpy(alpha, &ds, &mut it.s);
                axpy(alpha, &dir.dz, &mut it.z);
                it.tau += alpha * dtau;
                it.kappa += alpha * dkappa;
                step_taken = alpha;
            }
        }
        if step_taken < 1e-8 {
            stall += 1;
            if stall >= 3 {
                let (met, _, _) = metrics(orig, eq, &it, settings.tol_cert);
                return finish(
                    format!("step length collapsed at iteration {iter}"),
                    it,
                    met,
                    iter,
                    best,
                    best_cert,
                );
            }
        } else {
            stall = 0;
        }
        last = Some(iter);
    }
    let (met, _, _) = metrics(orig, eq, &it, settings.tol_cert);
    let iters = last.map_or(0, |i| i + 1);
    let why = format!(
        "iteration limit reached (pres {:.2e}, dres {:.2e}, gap {:.2e})",
        met.pres, met.dres, met.gap
    );
    finish(why, it, met, iters, best, best_cert)
}

/// Rounding can push a full step onto the PSD boundary; keep iterates factorizable.
fn psd_step_ok(sf: &StandardForm, it: &Iterate, dir: &Direction, ds: &[f64], alpha: f64) -> bool {
    sf.blocks.iter().all(|blk| match blk.cone {
        Cone::Psd(n) => {
            let r = blk.range();
            let s: Vec<f64> = r.clone().map(|i| it.s[i] + alpha * ds[i]).collect();
            let z: Vec<f64> = r.map(|i| it.z[i] + alpha * dir.dz[i]).collect();
            psd_interior(&s, n) && psd_interior(&z, n)
        }
        _ => true,
    })
}

#[allow(clippy::too_many_arguments)]
fn exp_step_ok(
    sf: &StandardForm,
    it: &Iterate,
    dir: &Direction,
    ds: &[f64],
    dtau: f64,
    dkappa: f64,
    alpha: f64,
    nu: f64,
    check_centrality: bool,
) -> bool {
    let mut sz_total = 0.0;
    let mut exp_products = Vec::new();
    for blk in &sf.blocks {
        let r = blk.range();
        let s: Vec<f64> = r.clone().map(|i| it.s[i] + alpha * ds[i]).collect();
        let z: Vec<f64> = r.clone().map(|i| it.z[i] + alpha * dir.dz[i]).collect();
        if !blk.cone.is_symmetric() {
            if !exp_primal_interior(&s) || !exp_dual_interior(&z) {
                return false;
            }
            exp_products.push(dot(&s, &z));
        }
        sz_total += dot(&s, &z);
    }
    if !check_centrality {
        return true;
    }
    let tau = it.tau + alpha * dtau;
    let kappa = it.kappa + alpha * dkappa;
    let mu = (sz_total + tau * kappa) / (nu + 1.0);
    exp_products.iter().all(|&p| p >= 0.03 * mu)
}

#[cfg(test)]
mod tests {
    use super::super::{AffineHermitian, AffineScalar, AffineVector};
    use super::*;
    use crate::linalg::{c, hermitian_eigenvalues, hermitian_part, CMat, CVec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn settings() -> SolverSettings {
        SolverSettings {
            tol_feas: 1e-9,
            tol_gap: 1e-9,
            ..SolverSettings::default()
        }
    }

    #[test]
    fn linear_program() {
        let mut p = ConicProblem::minimize();
        let x = p.add_scalar("x", false);
        let y = p.add_scalar("y", false);
        p.set_objective(AffineScalar::var(x).add(&AffineScalar::var(y)));
        p.add_nonneg("x>=1", AffineScalar::var(x).add_constant(-1.0));
        p.add_nonneg("y>=2", AffineScalar::var(y).add_constant(-2.0));
        let sol = solve(&p, &settings());
        assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.diagnostic);
        assert!((sol.objective - 3.0).abs() < 1e-7);
    }

    #[test]
    fn second_order_cone_with_equalities() {
        // min t  s.t. ||(x - 3, y - 4)|| <= t, x = 0, y = 0
        let mut p = ConicProblem::minimize();
        let x = p.add_scalar("x", false);
        let y = p.add_scalar("y", false);
        let t = p.add_scalar("t", false);
        p.set_objective(AffineScalar::var(t));
        let v = AffineVector::stack(&[
            AffineVector::from_scalar(&AffineScalar::var(x).add_constant(-3.0)),
            AffineVector::from_scalar(&AffineScalar::var(y).add_constant(-4.0)),
        ]);
        p.add_soc("dist", v, AffineScalar::var(t));
        p.add_zero("x=0", AffineScalar::var(x));
        p.add_zero("y=0", AffineScalar::var(y));
        let sol = solve(&p, &settings());
        assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.diagnostic);
        assert!((sol.objective - 5.0).abs() < 1e-7);
    }

    #[test]
    fn trace_constrained_sdp_gives_smallest_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2, 3, 4] {
            let a = CMat::from_fn(n, n, |_, _| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let cm = hermitian_part(&a);
            let mut p = ConicProblem::minimize();
            let x = p.add_hermitian("X", n, true);
            let cc = cm.clone();
            p.set_objective(AffineScalar::from_functional(x, move |e| {
                (&cc * e).trace().re
            }));
            p.add_zero("trace", AffineScalar::trace(x).add_constant(-1.0));
            let sol = solve(&p, &settings());
            assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.diagnostic);
            let oracle = hermitian_eigenvalues(&cm)[0];
            assert!(
                (sol.objective - oracle).abs() < 1e-6,
                "{} vs {}",
                sol.objective,
                oracle
            );
        }
    }

    #[test]
    fn complex_quadratic_constraint() {
        // min Tr(X) s.t. h^H X h >= 1 -> 1 / ||h||^2
        let h = CVec::from_vec(vec![c(0.3, -0.4), c(1.0, 0.2), c(-0.5, 0.5)]);
        let mut p = ConicProblem::minimize();
        let x = p.add_hermitian("X", 3, true);
        p.set_objective(AffineScalar::trace(x));
        p.add_nonneg("gain", AffineScalar::quad(x, &h).add_constant(-1.0));
        let sol = solve(&p, &settings());
        assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.diagnostic);
        let oracle = 1.0 / h.norm_squared();
        assert!((sol.objective - oracle).abs() < 1e-7 * (1.0 + oracle));
    }

    #[test]
    fn lmi_with_scalar_variable() {
        // min t s.t. t I - M >= 0  -> lambda_max(M)
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let mut p = ConicProblem::minimize();
        let t = p.add_scalar("t", false);
        p.set_objective(AffineScalar::var(t));
        let expr = AffineHermitian::scalar_times(t, CMat::identity(2, 2))
            .add(&AffineHermitian::constant(-m.clone()));
        p.add_lmi("tI - M", expr);
        let sol = solve(&p, &settings());
        assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.diagnostic);
        assert!((sol.objective - 3.0).abs() < 1e-7);
    }

    #[test]
    fn detects_infeasibility() {
        let mut p = ConicProblem::minimize();
        let x = p.add_scalar("x", false);
        p.set_objective(AffineScalar::var(x));
        p.add_nonneg("x>=1", AffineScalar::var(x).add_constant(-1.0));
        p.add_nonneg("x<=0", AffineScalar::var(x).scale(-1.0));
        let sol = solve(&p, &settings());
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn infeasible_sdp() {
        // X psd with Tr X = -1
        let mut p = ConicProblem::minimize();
        let x = p.add_hermitian("X", 2, true);
        p.set_objective(AffineScalar::trace(x));
        p.add_zero("trace", AffineScalar::trace(x).add_constant(1.0));
        let sol = solve(&p, &settings());
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn exponential_cone_epigraph() {
        // min t s.t. exp(x) <= t, x >= 1  -> e
        let mut p = ConicProblem::minimize();
        let x = p.add_scalar("x", false);
        let t = p.add_scalar("t", false);
        p.set_objective(AffineScalar::var(t));
        p.add_exp(
            "exp",
            AffineScalar::var(x),
            AffineScalar::constant(1.0),
            AffineScalar::var(t),
        );
        p.add_nonneg("x>=1", AffineScalar::var(x).add_constant(-1.0));
        let sol = solve(&p, &settings());
        assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.diagnostic);
        assert!((sol.objective - core::f64::consts::E).abs() < 1e-7);
    }

    #[test]
    fn exponential_cone_logarithm() {
        // max u s.t. exp(u) <= z, z <= 2  -> ln 2
        let mut p = ConicProblem::maximize();
        let u = p.add_scalar("u", false);
        let z = p.add_scalar("z", false);
        p.set_objective(AffineScalar::var(u));
        p.add_exp(
            "log",
            AffineScalar::var(u),
            AffineScalar::constant(1.0),
            AffineScalar::var(z),
        );
        p.add_nonneg("z<=2", AffineScalar::var(z).scale(-1.0).add_constant(2.0));
        let sol = solve(&p, &settings());
        assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.diagnostic);
        assert!((sol.objective - core::f64::consts::LN_2).abs() < 1e-7);
    }

    #[test]
    fn logistic_style_objective() {
        // max sum_k (1 - e_k (1 + t_k)) with t_k >= exp(-a (x_k - b)), x_1 + x_2 <= 1, x >= 0.
        // Symmetric weights give x_1 = x_2 = 0.5, value 2 - 2 e (1 + exp(-a (0.5 - b))).
        let (a, b, e) = (3.0, 0.2, 0.1);
        let mut p = ConicProblem::maximize();
        let xs = [p.add_scalar("x1", true), p.add_scalar("x2", true)];
        let ts = [p.add_scalar("t1", false), p.add_scalar("t2", false)];
        let mut obj = AffineScalar::constant(2.0 - 2.0 * e);
        for k in 0..2 {
            obj.add_scaled(&AffineScalar::var(ts[k]), -e);
            p.add_exp(
                "tail",
                AffineScalar::var(xs[k]).scale(-a).add_constant(a * b),
                AffineScalar::constant(1.0),
                AffineScalar::var(ts[k]),
            );
        }
        p.set_objective(obj);
        let budget = AffineScalar::var(xs[0])
            .add(&AffineScalar::var(xs[1]))
            .scale(-1.0)
            .add_constant(1.0);
        p.add_nonneg("budget", budget);
        let sol = solve(&p, &settings());
        assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.diagnostic);
        let oracle = 2.0 - 2.0 * e * (1.0 + libm::exp(-a * (0.5 - b)));
        assert!(
            (sol.objective - oracle).abs() < 1e-7,
            "{} vs {oracle}",
            sol.objective
        );
        assert!((sol.x[xs[0].index] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn solution_satisfies_constraints() {
        let h = CVec::from_vec(vec![c(0.3, -0.4), c(1.0, 0.2)]);
        let mut p = ConicProblem::minimize();
        let x = p.add_hermitian("X", 2, true);
        p.set_objective(AffineScalar::trace(x));
        p.add_nonneg("gain", AffineScalar::quad(x, &h).add_constant(-1.0));
        let sol = solve(&p, &settings());
        assert!(p.max_violation(&sol.x) < 1e-7);
    }
}
