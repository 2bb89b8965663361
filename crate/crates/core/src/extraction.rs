//! Post-processing of relaxed solutions: numerical rank, rank-one beamformer
//! extraction and feasibility checks of fixed designs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conic::{AffineHermitian, ConicProblem};
use crate::eh_model::{input_power, required_input_threshold};
use crate::error::{check_open_unit, Error, Result};
use crate::linalg::{
    c, hermitian_eigen, hermitian_eigenvalues, outer, quad_form, trace_re, CMat, CVec,
};
use crate::power_min::{check_inputs, BeamformingSolution};
use crate::robust::{
    gaussian_eh_constraints, gaussian_interference_constraints, gaussian_rate_constraints,
    nominal_input, nominal_interference, nominal_rate, sproc_eh_lmi, sproc_interference_lmi,
    sproc_rate_lmi, BernsteinGroup, DesignVars,
};
use crate::stats::{ball_point, correlated_gaussian, Proportion};
use crate::system_model::{ChannelSet, NetworkConfig, UncertaintyModel};

/// Margin below which a constraint of a fixed design counts as violated.
pub const FEAS_TOL: f64 = 1e-7;

/// Number of eigenvalues above `rel_tol * lambda_max`.
pub fn numerical_rank(w: &CMat, rel_tol: f64) -> usize {
    let vals = hermitian_eigenvalues(w);
    let max = vals.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0;
    }
    vals.iter().filter(|&&l| l > rel_tol * max).count()
}

/// `sqrt(lambda_1) u_1` for the principal eigenpair.
pub fn eigen_extract(w: &CMat) -> CVec {
    let (vals, vecs) = hermitian_eigen(w);
    let n = vals.len();
    let lmax = vals[n - 1].max(0.0);
    vecs.column(n - 1).into_owned().scale(libm::sqrt(lmax))
}

/// A design with rank-one information beams.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedDesign {
    pub w: Vec<CMat>,
    pub v: CMat,
    pub rho: f64,
}

impl FixedDesign {
    pub fn from_vectors(w: &[CVec], v: &CMat, rho: f64) -> Self {
        Self {
            w: w.iter().map(outer).collect(),
            v: v.clone(),
            rho,
        }
    }

    pub fn from_solution(sol: &BeamformingSolution) -> Self {
        Self {
            w: sol.w.clone(),
            v: sol.v.clone(),
            rho: sol.rho,
        }
    }

    pub fn power(&self) -> f64 {
        self.w.iter().map(trace_re).sum::<f64>() + trace_re(&self.v)
    }
}

/// `min_{‖x‖ <= r} x^H A x + 2 Re(b^H x) + c` for Hermitian `A`.
pub fn trust_region_min(a: &CMat, b: &CVec, c0: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return c0;
    }
    let (vals, vecs) = hermitian_eigen(a);
    let beta: Vec<f64> = (0..vals.len())
        .map(|i| vecs.column(i).dotc(b).norm_sqr())
        .collect();
    let scale = vals.iter().fold(1.0f64, |m, l| m.max(l.abs()));
    let lmin = vals[0];
    let value = |nu: f64, extra: f64| -> f64 {
        // y_i = -beta_i / (lambda_i + nu); f = c - sum (lambda_i + 2 nu) |beta_i|^2 / (lambda_i + nu)^2
        let mut f = c0;
        for (l, b2) in vals.iter().zip(&beta) {
            let d = l + nu;
            if d.abs() > 1e-14 * scale {
                f += l * b2 / (d * d) - 2.0 * b2 / d;
            }
        }
        f + lmin * extra
    };
    let btot: f64 = beta.iter().sum();
    let negligible = |b2: f64| b2 <= 1e-20 * btot;
    let norm_sq = |nu: f64| -> f64 {
        vals.iter()
            .zip(&beta)
            .map(|(l, &b2)| {
                let d = l + nu;
                if d.abs() > 1e-14 * scale {
                    b2 / (d * d)
                } else if negligible(b2) {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .sum()
    };
    let r2 = r * r;
    if lmin > 0.0 && norm_sq(0.0) <= r2 {
        return value(0.0, 0.0);
    }
    let nu_lo = (-lmin).max(0.0);
    let degenerate = beta
        .iter()
        .zip(vals.iter())
        .filter(|(_, l)| (*l - lmin).abs() <= 1e-12 * scale)
        .all(|(b2, _)| negligible(*b2));
    if degenerate && norm_sq(nu_lo) <= r2 {
        // hard case: move along the bottom eigenvector to reach the boundary
        return value(nu_lo, r2 - norm_sq(nu_lo));
    }
    let mut lo = nu_lo;
    let bnorm = libm::sqrt(beta.iter().sum::<f64>());
    let mut hi = nu_lo + bnorm / r + 1.0;
    while norm_sq(hi) > r2 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm_sq(mid) > r2 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    value(hi, 0.0)
}

fn split_bordered(m: &CMat) -> (CMat, CVec, f64) {
    let n = m.nrows() - 1;
    let a = m.view((0, 0), (n, n)).into_owned();
    let b = m.view((0, n), (n, 1)).column(0).into_owned();
    (a, b, m[(n, n)].re)
}

/// Margin of an S-procedure block with the design assigned and the single
/// multiplier at coordinate `mult`: the worst case of the underlying quadratic
/// over the error ball.
fn sproc_margin(expr: &AffineHermitian, x: &mut [f64], mult: usize) -> f64 {
    x[mult] = 0.0;
    let m0 = expr.eval(x);
    x[mult] = 1.0;
    let m1 = expr.eval(x);
    x[mult] = 0.0;
    let (a, b, c0) = split_bordered(&m0);
    let r2 = -(m1[(m1.nrows() - 1, m1.ncols() - 1)].re - c0);
    trust_region_min(&a, &b, c0, libm::sqrt(r2.max(0.0)))
}

/// Margin of a Bernstein group with minimal slacks.
fn bernstein_margin(g: &BernsteinGroup, x: &mut [f64]) -> f64 {
    let (u1, u2) = (g.upsilon1.index, g.upsilon2.index);
    x[u1] = 0.0;
    x[u2] = 0.0;
    let l0 = g.lmi.expr.eval(x);
    let lmin = hermitian_eigenvalues(&l0)
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    x[u2] = (-lmin).max(0.0);
    x[u1] = g.soc.vector.eval(x).norm();
    let out = g.linear.eval(x);
    x[u1] = 0.0;
    x[u2] = 0.0;
    out
}

/// Per-constraint margins of a fixed design under the channel set's model, with
/// every multiplier and slack chosen optimally. Covers rate, interference,
/// harvesting (`rho E_in >= D`) and the power budget.
pub fn robust_margins(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    design: &FixedDesign,
) -> Result<Vec<(String, f64)>> {
    check_inputs(cfg, ch)?;
    check_open_unit("rho", design.rho)?;
    if design.w.len() != cfg.k {
        return Err(Error::Dimension {
            expected: cfg.k,
            got: design.w.len(),
        });
    }
    let d = required_input_threshold(cfg.p_ks, &cfg.eh)?;
    let mut cfg_v = cfg.clone();
    cfg_v.energy_beam = true;
    let mut prob = ConicProblem::minimize();
    let vars = DesignVars::declare(&mut prob, &cfg_v, Some(design.rho))?;
    // reserve the multiplier/slack coordinates by building every block first
    enum Block {
        Lmi(String, AffineHermitian, usize),
        Group(BernsteinGroup),
        Nominal(String, crate::conic::AffineScalar),
    }
    let mut blocks = Vec::new();
    let model = &ch.uncertainty;
    for k in 0..cfg.k {
        for i in k..cfg.k {
            blocks.push(match model {
                UncertaintyModel::Perfect => Block::Nominal(
                    format!("rate k={k} i={i}"),
                    nominal_rate(k, i, ch, cfg, &vars),
                ),
                UncertaintyModel::Bounded { .. } => {
                    let b = sproc_rate_lmi(&mut prob, k, i, ch, cfg, &vars)?;
                    Block::Lmi(b.label, b.expr, prob.num_coords() - 1)
                }
                UncertaintyModel::Gaussian { .. } => {
                    Block::Group(gaussian_rate_constraints(&mut prob, k, i, ch, cfg, &vars)?)
                }
            });
        }
    }
    for n in 0..ch.num_pu() {
        blocks.push(match model {
            UncertaintyModel::Perfect => Block::Nominal(
                format!("interference n={n}"),
                nominal_interference(n, ch, cfg, &vars),
            ),
            UncertaintyModel::Bounded { .. } => {
                let b = sproc_interference_lmi(&mut prob, n, ch, cfg, &vars)?;
                Block::Lmi(b.label, b.expr, prob.num_coords() - 1)
            }
            UncertaintyModel::Gaussian { .. } => Block::Group(gaussian_interference_constraints(
                &mut prob, n, ch, cfg, &vars,
            )?),
        });
    }
    for k in 0..cfg.k {
        blocks.push(match model {
            UncertaintyModel::Perfect => Block::Nominal(
                format!("harvest k={k}"),
                nominal_input(k, ch, cfg, &vars, &vars.q_expr().scale(d)),
            ),
            UncertaintyModel::Bounded { .. } => {
                let b = sproc_eh_lmi(&mut prob, k, ch, cfg, &vars, d)?;
                Block::Lmi(b.label, b.expr, prob.num_coords() - 1)
            }
            UncertaintyModel::Gaussian { .. } => {
                Block::Group(gaussian_eh_constraints(&mut prob, k, ch, cfg, &vars, d)?)
            }
        });
    }
    let mut x = alloc::vec![0.0; prob.num_coords()];
    for (wk, mat) in vars.w.iter().zip(&design.w) {
        wk.assign(mat, &mut x);
    }
    if let Some(v) = vars.v {
        v.assign(&design.v, &mut x);
    }
    let mut out: Vec<(String, f64)> = blocks
        .into_iter()
        .map(|b| match b {
            Block::Lmi(label, expr, mult) => (label, sproc_margin(&expr, &mut x, mult)),
            Block::Group(g) => {
                let label = g.lmi.label.clone();
                (label, bernstein_margin(&g, &mut x))
            }
            Block::Nominal(label, e) => (label, e.eval(&x)),
        })
        .collect();
    out.push(("power budget".into(), cfg.p_b - design.power()));
    Ok(out)
}

/// Labels of constraints whose margin is below `-FEAS_TOL`.
pub fn violated(margins: &[(String, f64)]) -> Vec<String> {
    margins
        .iter()
        .filter(|(_, m)| !(*m >= -FEAS_TOL))
        .map(|(l, _)| l.clone())
        .collect()
}

/// No candidate could be scaled into the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no randomized candidate is feasible within the scaling cap")]
pub struct NoneFeasible;

/// Largest power multiplier tried when restoring feasibility.
pub const SCALE_CAP: f64 = 100.0;

/// Smallest common power multiplier in `(0, SCALE_CAP]` making the scaled vectors
/// feasible, found by bisection.
pub fn min_feasible_scale(w: &[CVec], mut feas: impl FnMut(&[CVec]) -> bool) -> Option<f64> {
    let scaled = |c: f64| -> Vec<CVec> { w.iter().map(|x| x.scale(libm::sqrt(c))).collect() };
    let mut hi = None;
    let mut c = 1.0;
    while c <= SCALE_CAP {
        if feas(&scaled(c)) {
            hi = Some(c);
            break;
        }
        c = if c * 2.0 > SCALE_CAP && c < SCALE_CAP {
            SCALE_CAP
        } else {
            c * 2.0
        };
    }
    let mut hi = hi?;
    let mut lo = 0.0;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if feas(&scaled(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Candidate `U T^{1/2} e` with uniform phases in `e`.
pub fn random_candidate<R: Rng + ?Sized>(w: &CMat, rng: &mut R) -> CVec {
    let (vals, vecs) = hermitian_eigen(w);
    let mut out = CVec::zeros(w.nrows());
    for (i, &l) in vals.iter().enumerate() {
        let theta: f64 = rng.gen_range(0.0..core::f64::consts::TAU);
        let e = c(libm::cos(theta), libm::sin(theta));
        out += vecs.column(i).scale(libm::sqrt(l.max(0.0))) * e;
    }
    out
}

/// Best of `count` scaled random candidates, by transmitted power.
pub fn randomization_extract(
    w: &[CMat],
    count: usize,
    seed: u64,
    mut feas: impl FnMut(&[CVec]) -> bool,
) -> core::result::Result<Vec<CVec>, NoneFeasible> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<CVec>)> = None;
    for _ in 0..count.max(1) {
        let cand: Vec<CVec> = w.iter().map(|wk| random_candidate(wk, &mut rng)).collect();
        if let Some(s) = min_feasible_scale(&cand, &mut feas) {
            let scaled: Vec<CVec> = cand.iter().map(|x| x.scale(libm::sqrt(s))).collect();
            let power: f64 = scaled.iter().map(|x| x.norm_squared()).sum();
            if best.as_ref().map_or(true, |(p, _)| power < *p) {
                best = Some((power, scaled));
            }
        }
    }
    best.map(|(_, w)| w).ok_or(NoneFeasible)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractionMethod {
    Eigen,
    Randomization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    pub w: Vec<CVec>,
    pub method: ExtractionMethod,
    pub feasible: bool,
    /// Extracted power over the relaxed optimum.
    pub overhead: f64,
    pub violated: Vec<String>,
    pub margins: Vec<(String, f64)>,
}

/// Rank-one beamformers from a relaxed power-minimisation solution. Randomization
/// falls back to the eigen vectors (reported infeasible) when no candidate works.
pub fn extract(
    sol: &BeamformingSolution,
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    method: ExtractionMethod,
    count: usize,
    seed: u64,
) -> Result<ExtractionResult> {
    let eigen: Vec<CVec> = sol.w.iter().map(eigen_extract).collect();
    let w = match method {
        ExtractionMethod::Eigen => eigen,
        ExtractionMethod::Randomization => {
            let mut failure = None;
            let feas = |cand: &[CVec]| match robust_margins(
                cfg,
                ch,
                &FixedDesign::from_vectors(cand, &sol.v, sol.rho),
            ) {
                Ok(m) => violated(&m).is_empty(),
                Err(e) => {
                    failure.get_or_insert(e);
                    false
                }
            };
            let picked = randomization_extract(&sol.w, count, seed, feas);
            if let Some(e) = failure {
                return Err(e);
            }
            picked.unwrap_or(eigen)
        }
    };
    let design = FixedDesign::from_vectors(&w, &sol.v, sol.rho);
    let margins = robust_margins(cfg, ch, &design)?;
    let violated = violated(&margins);
    Ok(ExtractionResult {
        overhead: design.power() / sol.objective,
        feasible: violated.is_empty(),
        w,
        method,
        violated,
        margins,
    })
}

/// Sampled check of a fixed design.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub samples: usize,
    /// Smallest sampled margin per constraint.
    pub worst: Vec<(String, f64)>,
    /// Violation counts per constraint (margin below `-tol`).
    pub outage: Vec<(String, Proportion)>,
}

impl VerificationReport {
    pub fn worst_margin(&self) -> f64 {
        self.worst.iter().map(|w| w.1).fold(f64::INFINITY, f64::min)
    }

    /// Largest empirical violation rate.
    pub fn max_outage(&self) -> f64 {
        self.outage
            .iter()
            .map(|o| o.1.estimate())
            .fold(0.0, f64::max)
    }
}

/// Evaluate rate, harvesting and interference constraints on sampled channel
/// errors: ball boundary and interior points alternately (bounded), Gaussian
/// draws (Gaussian) or the estimate alone (perfect CSI).
pub fn verify_robust_feasibility(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    design: &FixedDesign,
    n_samples: usize,
    tol: f64,
    seed: u64,
) -> Result<VerificationReport> {
    check_inputs(cfg, ch)?;
    check_open_unit("rho", design.rho)?;
    let d = required_input_threshold(cfg.p_ks, &cfg.eh)?;
    let gamma = cfg.gamma_min();
    let m = cfg.m;
    let (su_sqrt, pu_sqrt) = match &ch.uncertainty {
        UncertaintyModel::Gaussian { su_cov, pu_cov } => (
            su_cov
                .iter()
                .map(|c| crate::linalg::psd_sqrt(c, 1e-12))
                .collect::<Result<Vec<_>>>()?,
            pu_cov
                .iter()
                .map(|c| crate::linalg::psd_sqrt(c, 1e-12))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => (Vec::new(), Vec::new()),
    };
    let samples = match ch.uncertainty {
        UncertaintyModel::Perfect => 1,
        _ => n_samples.max(1),
    };
    let mut labels = Vec::new();
    for k in 0..cfg.k {
        for i in k..cfg.k {
            labels.push(format!("rate k={k} i={i}"));
        }
    }
    for k in 0..cfg.k {
        labels.push(format!("harvest k={k}"));
    }
    for n in 0..ch.num_pu() {
        labels.push(format!("interference n={n}"));
    }
    let mut worst = alloc::vec![f64::INFINITY; labels.len()];
    let mut fails = alloc::vec![0usize; labels.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma: CMat = design.w.iter().fold(design.v.clone(), |acc, w| acc + w);
    let noise = cfg.sigma_s_sq + cfg.sigma_d_sq / (1.0 - design.rho);
    let mut margins = Vec::with_capacity(labels.len());
    for s in 0..samples {
        let boundary = s % 2 == 0;
        let dh: Vec<CVec> = (0..cfg.k)
            .map(|i| match &ch.uncertainty {
                UncertaintyModel::Perfect => CVec::zeros(m),
                UncertaintyModel::Bounded { su_radius, .. } => {
                    ball_point(&mut rng, m, su_radius[i], boundary)
                }
                UncertaintyModel::Gaussian { .. } => correlated_gaussian(&mut rng, &su_sqrt[i]),
            })
            .collect();
        let dg: Vec<CVec> = (0..ch.num_pu())
            .map(|n| match &ch.uncertainty {
                UncertaintyModel::Perfect => CVec::zeros(m),
                UncertaintyModel::Bounded { pu_radius, .. } => {
                    ball_point(&mut rng, m, pu_radius[n], boundary)
                }
                UncertaintyModel::Gaussian { .. } => correlated_gaussian(&mut rng, &pu_sqrt[n]),
            })
            .collect();
        margins.clear();
        for k in 0..cfg.k {
            for i in k..cfg.k {
                // SINR >= gamma rearranged to signal - gamma * (interference + noise)
                let h = &ch.h_hat[i] + &dh[i];
                let signal = quad_form(&h, &design.w[k]);
                let residual: f64 = design.w[..k].iter().map(|wj| quad_form(&dh[i], wj)).sum();
                let later: f64 = design.w[k + 1..].iter().map(|wj| quad_form(&h, wj)).sum();
                let denom = residual + later + quad_form(&h, &design.v) + noise;
                margins.push(signal - gamma * denom);
            }
        }
        for k in 0..cfg.k {
            let h = &ch.h_hat[k] + &dh[k];
            let e_in = input_power(&h, &design.w, &design.v, design.rho, cfg.sigma_s_sq)?;
            margins.push(e_in - d);
        }
        for n in 0..ch.num_pu() {
            let g = &ch.g_hat[n] + &dg[n];
            margins.push(cfg.p_np - quad_form(&g, &sigma));
        }
        for (j, &mg) in margins.iter().enumerate() {
            worst[j] = worst[j].min(mg);
            if mg < -tol {
                fails[j] += 1;
            }
        }
    }
    Ok(VerificationReport {
        samples,
        worst: labels.iter().cloned().zip(worst).collect(),
        outage: labels
            .into_iter()
            .zip(fails)
            .map(|(l, f)| {
                (
                    l,
                    Proportion {
                        successes: f,
                        trials: samples,
                    },
                )
            })
            .collect(),
    })
}
