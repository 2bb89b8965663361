//! Robust constraint builders.
//!
//! Bounded errors are handled with S-procedure LMIs of size `M + 1`; Gaussian
//! errors with Bernstein-type convex restrictions of quadratic chance
//! constraints; perfect CSI with the nominal scalar constraints.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::conic::{
    vec_columns, AffineHermitian, AffineScalar, AffineVector, ConicProblem, Constraint, LmiBlock,
    MatVar, ScalarVar, SocBlock,
};
use crate::error::{check_half_open_unit, check_open_unit, Error, Result};
use crate::linalg::{psd_sqrt, quad_form, CMat, CVec};
use crate::system_model::{ChannelSet, NetworkConfig, UncertaintyModel};

/// How the power-splitting ratio enters the problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Split {
    /// `rho` is optimised; `p >= 1/(1-rho)` and `q >= 1/rho` via rotated cones.
    Variable {
        rho: ScalarVar,
        p: ScalarVar,
        q: ScalarVar,
    },
    /// `rho` is a constant.
    Fixed(f64),
}

/// Optimisation variables shared by every builder.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVars {
    pub w: Vec<MatVar>,
    pub v: Option<MatVar>,
    pub split: Split,
}

impl DesignVars {
    /// Declare `W_1..W_K` (PSD), the energy beam `V` (PSD, unless disabled) and the
    /// split variables. With `fixed_rho = None` the ratio is a variable.
    pub fn declare(
        prob: &mut ConicProblem,
        cfg: &NetworkConfig,
        fixed_rho: Option<f64>,
    ) -> Result<Self> {
        let w = (0..cfg.k)
            .map(|k| prob.add_hermitian(&format!("W{k}"), cfg.m, true))
            .collect();
        let v = cfg
            .energy_beam
            .then(|| prob.add_hermitian("V", cfg.m, true));
        let split = match fixed_rho {
            Some(rho) => {
                check_open_unit("rho", rho)?;
                Split::Fixed(rho)
            }
            None => {
                let rho = prob.add_scalar("rho", false);
                let p = prob.add_scalar("p", false);
                let q = prob.add_scalar("q", false);
                let one_minus_rho =
                    AffineScalar::constant(1.0).add(&AffineScalar::var(rho).scale(-1.0));
                let pc = hyperbolic_cone("p(1-rho) >= 1", &AffineScalar::var(p), &one_minus_rho);
                prob.constraints.push(Constraint::Soc(pc));
                let qc =
                    hyperbolic_cone("q rho >= 1", &AffineScalar::var(q), &AffineScalar::var(rho));
                prob.constraints.push(Constraint::Soc(qc));
                Split::Variable { rho, p, q }
            }
        };
        Ok(Self { w, v, split })
    }

    pub fn m(&self) -> usize {
        self.w[0].n
    }

    /// `sum_j W_j + V`
    pub fn sigma(&self) -> AffineHermitian {
        let mut out = AffineHermitian::zero(self.m());
        for &wj in &self.w {
            out.add_scaled(&AffineHermitian::identity_map(wj), 1.0);
        }
        if let Some(v) = self.v {
            out.add_scaled(&AffineHermitian::identity_map(v), 1.0);
        }
        out
    }

    /// `C_k = W_k - gamma (sum_{j>k} W_j + V)`
    pub fn c_k(&self, k: usize, gamma: f64) -> AffineHermitian {
        let mut out = AffineHermitian::identity_map(self.w[k]);
        for &wj in &self.w[k + 1..] {
            out.add_scaled(&AffineHermitian::identity_map(wj), -gamma);
        }
        if let Some(v) = self.v {
            out.add_scaled(&AffineHermitian::identity_map(v), -gamma);
        }
        out
    }

    /// `sum_{j<k} W_j`, the residual left after imperfect SIC.
    pub fn sic_residual(&self, k: usize) -> AffineHermitian {
        let mut out = AffineHermitian::zero(self.m());
        for &wj in &self.w[..k] {
            out.add_scaled(&AffineHermitian::identity_map(wj), 1.0);
        }
        out
    }

    /// Stand-in for `1/(1-rho)`.
    pub fn p_expr(&self) -> AffineScalar {
        match self.split {
            Split::Variable { p, .. } => AffineScalar::var(p),
            Split::Fixed(rho) => AffineScalar::constant(1.0 / (1.0 - rho)),
        }
    }

    /// Stand-in for `1/rho`.
    pub fn q_expr(&self) -> AffineScalar {
        match self.split {
            Split::Variable { q, .. } => AffineScalar::var(q),
            Split::Fixed(rho) => AffineScalar::constant(1.0 / rho),
        }
    }

    /// `Tr(sum_j W_j + V)`
    pub fn total_power(&self) -> AffineScalar {
        self.sigma().functional(crate::linalg::trace_re)
    }
}

/// Rotated cone `x y >= 1`, `x, y >= 0` written as `‖(2, x - y)‖ <= x + y`.
pub fn hyperbolic_cone(label: &str, x: &AffineScalar, y: &AffineScalar) -> SocBlock {
    let diff = x.clone().add(&y.clone().scale(-1.0));
    let vector = AffineVector::stack(&[
        AffineVector::from_scalar(&AffineScalar::constant(2.0)),
        AffineVector::from_scalar(&diff),
    ]);
    SocBlock {
        label: label.into(),
        vector,
        bound: x.clone().add(y),
    }
}

/// `[[a, b], [b^H, c]]`
pub fn bordered(a: &AffineHermitian, b: &AffineVector, c: &AffineScalar) -> AffineHermitian {
    let m = a.dim;
    let build = |am: Option<&CMat>, bv: Option<&CVec>, cs: f64| {
        let mut out = CMat::zeros(m + 1, m + 1);
        if let Some(am) = am {
            out.view_mut((0, 0), (m, m)).copy_from(am);
        }
        if let Some(bv) = bv {
            for r in 0..m {
                out[(r, m)] = bv[r];
                out[(m, r)] = bv[r].conj();
            }
        }
        out[(m, m)] = num_complex::Complex64::new(cs, 0.0);
        out
    };
    let mut indices: BTreeMap<usize, (Option<&CMat>, Option<&CVec>, f64)> = BTreeMap::new();
    for (i, mat) in &a.terms {
        indices.entry(*i).or_insert((None, None, 0.0)).0 = Some(mat);
    }
    for (i, v) in &b.terms {
        indices.entry(*i).or_insert((None, None, 0.0)).1 = Some(v);
    }
    for (i, s) in &c.terms {
        indices.entry(*i).or_insert((None, None, 0.0)).2 += *s;
    }
    let mut out = AffineHermitian::zero(m + 1);
    out.constant = build(Some(&a.constant), Some(&b.constant), c.constant);
    out.terms = indices
        .into_iter()
        .map(|(i, (am, bv, cs))| (i, build(am, bv, cs)))
        .collect();
    out
}

fn quad_scalar(expr: &AffineHermitian, h: &CVec) -> AffineScalar {
    expr.functional(|m| quad_form(h, m))
}

fn times_vec(expr: &AffineHermitian, h: &CVec) -> AffineVector {
    expr.apply_vec(|m| m * h)
}

fn identity_scaled(s: ScalarVar, m: usize, factor: f64) -> AffineHermitian {
    AffineHermitian::scalar_times(s, CMat::identity(m, m).scale(factor))
}

fn require_bounded(ch: &ChannelSet) -> Result<()> {
    match ch.uncertainty {
        UncertaintyModel::Bounded { .. } => Ok(()),
        _ => Err(Error::Model("bounded uncertainty required")),
    }
}

fn require_gaussian(ch: &ChannelSet) -> Result<(&[CMat], &[CMat])> {
    match &ch.uncertainty {
        UncertaintyModel::Gaussian { su_cov, pu_cov } => Ok((su_cov, pu_cov)),
        _ => Err(Error::Model("gaussian uncertainty required")),
    }
}

/// Worst-case SINR of stream `k` at SU `i >= k` over the error ball of SU `i`.
/// Allocates the multiplier `alpha_{k,i} >= 0`.
pub fn sproc_rate_lmi(
    prob: &mut ConicProblem,
    k: usize,
    i: usize,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
) -> Result<LmiBlock> {
    if k > i {
        return Err(Error::Index { k, i });
    }
    require_bounded(ch)?;
    let m = vars.m();
    let gamma = cfg.gamma_min();
    let phi = ch.su_radius(i);
    let h = &ch.h_hat[i];
    let alpha = prob.add_scalar(&format!("alpha{k}_{i}"), true);
    let ck = vars.c_k(k, gamma);
    let mut a = ck.clone();
    a.add_scaled(&vars.sic_residual(k), -gamma);
    a.add_scaled(&identity_scaled(alpha, m, 1.0), 1.0);
    let b = times_vec(&ck, h);
    let mut c = quad_scalar(&ck, h).add_constant(-gamma * cfg.sigma_s_sq);
    c.add_scaled(&vars.p_expr(), -gamma * cfg.sigma_d_sq);
    c.add_scaled(&AffineScalar::var(alpha), -phi * phi);
    let mut expr = bordered(&a, &b, &c);
    expr.compress();
    Ok(LmiBlock {
        label: format!("rate k={k} i={i}"),
        expr,
    })
}

/// Worst-case interference at PU `n` over its error ball. Allocates `beta_n >= 0`.
pub fn sproc_interference_lmi(
    prob: &mut ConicProblem,
    n: usize,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
) -> Result<LmiBlock> {
    require_bounded(ch)?;
    let m = vars.m();
    let psi = ch.pu_radius(n);
    let g = &ch.g_hat[n];
    let beta = prob.add_scalar(&format!("beta{n}"), true);
    let sigma = vars.sigma();
    let mut a = sigma.clone().scale(-1.0);
    a.add_scaled(&identity_scaled(beta, m, 1.0), 1.0);
    let b = times_vec(&sigma, g).scale(-1.0);
    let mut c = quad_scalar(&sigma, g).scale(-1.0).add_constant(cfg.p_np);
    c.add_scaled(&AffineScalar::var(beta), -psi * psi);
    let mut expr = bordered(&a, &b, &c);
    expr.compress();
    Ok(LmiBlock {
        label: format!("interference n={n}"),
        expr,
    })
}

/// Worst-case input power at SU `k` against `corner` (either `D_k q` or `tau_k / rho`).
fn sproc_input_lmi(
    prob: &mut ConicProblem,
    k: usize,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
    corner: AffineScalar,
    label: String,
) -> Result<LmiBlock> {
    require_bounded(ch)?;
    let m = vars.m();
    let phi = ch.su_radius(k);
    let h = &ch.h_hat[k];
    let theta = prob.add_scalar(&format!("theta{k}"), true);
    let sigma = vars.sigma();
    let mut a = sigma.clone();
    a.add_scaled(&identity_scaled(theta, m, 1.0), 1.0);
    let b = times_vec(&sigma, h);
    let mut c = quad_scalar(&sigma, h).add_constant(cfg.sigma_s_sq);
    c.add_scaled(&corner, -1.0);
    c.add_scaled(&AffineScalar::var(theta), -phi * phi);
    let mut expr = bordered(&a, &b, &c);
    expr.compress();
    Ok(LmiBlock { label, expr })
}

/// Worst-case harvesting constraint `rho E_in >= D_k` (with `1/rho` replaced by `q`).
pub fn sproc_eh_lmi(
    prob: &mut ConicProblem,
    k: usize,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
    d_k: f64,
) -> Result<LmiBlock> {
    let corner = vars.q_expr().scale(d_k);
    sproc_input_lmi(prob, k, ch, cfg, vars, corner, format!("harvest k={k}"))
}

/// Worst-case input power at SU `k` is at least `tau_k` for a fixed split `rho`.
pub fn sproc_tau_lmi(
    prob: &mut ConicProblem,
    k: usize,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
    tau: ScalarVar,
    rho_fixed: f64,
) -> Result<LmiBlock> {
    check_open_unit("rho", rho_fixed)?;
    let corner = AffineScalar::var(tau).scale(1.0 / rho_fixed);
    sproc_input_lmi(prob, k, ch, cfg, vars, corner, format!("tau k={k}"))
}

/// Convex restriction of a quadratic chance constraint on `z ~ CN(0, I)`,
/// `f(z) = z^H A z + 2 Re(z^H b) + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinGroup {
    /// Must be nonnegative.
    pub linear: AffineScalar,
    pub soc: SocBlock,
    pub lmi: LmiBlock,
    pub upsilon1: ScalarVar,
    pub upsilon2: ScalarVar,
}

impl BernsteinGroup {
    pub fn add_to(self, prob: &mut ConicProblem) {
        let label = format!("{} (trace)", self.lmi.label);
        prob.add_nonneg(&label, self.linear);
        prob.constraints.push(Constraint::Soc(self.soc));
        prob.constraints.push(Constraint::Lmi(self.lmi));
    }
}

fn bernstein_norm_vector(a: &AffineHermitian, b: &AffineVector) -> AffineVector {
    let va = a.apply_vec(vec_columns);
    AffineVector::stack(&[va, b.clone().scale(core::f64::consts::SQRT_2)])
}

/// `Pr{f(z) >= 0} >= 1 - xi` is implied by
/// `Tr A - sqrt(-2 ln xi) u1 + ln(xi) u2 + c >= 0`, `‖[vec A; sqrt 2 b]‖ <= u1`,
/// `u2 I + A ⪰ 0`, `u2 >= 0`.
pub fn bernstein_group_i(
    prob: &mut ConicProblem,
    label: &str,
    a: &AffineHermitian,
    b: &AffineVector,
    c: &AffineScalar,
    xi: f64,
) -> Result<BernsteinGroup> {
    check_half_open_unit("xi", xi)?;
    let ln_xi = libm::log(xi);
    let u1 = prob.add_scalar(&format!("{label} u1"), false);
    let u2 = prob.add_scalar(&format!("{label} u2"), true);
    let mut linear = a.functional(crate::linalg::trace_re).add(c);
    linear.add_scaled(&AffineScalar::var(u1), -libm::sqrt(-2.0 * ln_xi));
    linear.add_scaled(&AffineScalar::var(u2), ln_xi);
    let mut lmi = identity_scaled(u2, a.dim, 1.0);
    lmi.add_scaled(a, 1.0);
    Ok(finish_group(label, linear, a, b, lmi, u1, u2))
}

/// `Pr{f(z) <= 0} >= 1 - xi` is implied by
/// `Tr A + sqrt(-2 ln xi) u1 - ln(xi) u2 + c <= 0`, `‖[vec A; sqrt 2 b]‖ <= u1`,
/// `u2 I - A ⪰ 0`, `u2 >= 0` (group I applied to `-f`).
pub fn bernstein_group_ii(
    prob: &mut ConicProblem,
    label: &str,
    a: &AffineHermitian,
    b: &AffineVector,
    c: &AffineScalar,
    xi: f64,
) -> Result<BernsteinGroup> {
    check_half_open_unit("xi", xi)?;
    let ln_xi = libm::log(xi);
    let u1 = prob.add_scalar(&format!("{label} u1"), false);
    let u2 = prob.add_scalar(&format!("{label} u2"), true);
    let mut linear = a.functional(crate::linalg::trace_re).add(c).scale(-1.0);
    linear.add_scaled(&AffineScalar::var(u1), -libm::sqrt(-2.0 * ln_xi));
    linear.add_scaled(&AffineScalar::var(u2), ln_xi);
    let mut lmi = identity_scaled(u2, a.dim, 1.0);
    lmi.add_scaled(a, -1.0);
    Ok(finish_group(label, linear, a, b, lmi, u1, u2))
}

fn finish_group(
    label: &str,
    mut linear: AffineScalar,
    a: &AffineHermitian,
    b: &AffineVector,
    mut lmi: AffineHermitian,
    u1: ScalarVar,
    u2: ScalarVar,
) -> BernsteinGroup {
    linear.compress();
    lmi.compress();
    let mut vector = bernstein_norm_vector(a, b);
    vector.compress();
    BernsteinGroup {
        linear,
        soc: SocBlock {
            label: format!("{label} (norm)"),
            vector,
            bound: AffineScalar::var(u1),
        },
        lmi: LmiBlock {
            label: label.into(),
            expr: lmi,
        },
        upsilon1: u1,
        upsilon2: u2,
    }
}

fn congruence(expr: &AffineHermitian, s: &CMat) -> AffineHermitian {
    expr.map(s.nrows(), |m| s * m * s)
}

/// Rate chance constraint for stream `k` at SU `i` (Gaussian errors).
pub fn gaussian_rate_constraints(
    prob: &mut ConicProblem,
    k: usize,
    i: usize,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
) -> Result<BernsteinGroup> {
    if k > i {
        return Err(Error::Index { k, i });
    }
    let (su_cov, _) = require_gaussian(ch)?;
    let s = psd_sqrt(&su_cov[i], 1e-12)?;
    let gamma = cfg.gamma_min();
    let h = &ch.h_hat[i];
    let ck = vars.c_k(k, gamma);
    let mut inner = ck.clone();
    inner.add_scaled(&vars.sic_residual(k), -gamma);
    let a = congruence(&inner, &s);
    let b = ck.apply_vec(|m| &s * (m * h));
    let mut c = quad_scalar(&ck, h).add_constant(-gamma * cfg.sigma_s_sq);
    c.add_scaled(&vars.p_expr(), -gamma * cfg.sigma_d_sq);
    bernstein_group_i(prob, &format!("rate k={k} i={i}"), &a, &b, &c, cfg.xi_k)
}

fn gaussian_input_group(
    prob: &mut ConicProblem,
    k: usize,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
    corner: AffineScalar,
    xi: f64,
    label: String,
) -> Result<BernsteinGroup> {
    let (su_cov, _) = require_gaussian(ch)?;
    let s = psd_sqrt(&su_cov[k], 1e-12)?;
    let h = &ch.h_hat[k];
    let sigma = vars.sigma();
    let a = congruence(&sigma, &s);
    let b = sigma.apply_vec(|m| &s * (m * h));
    let mut c = quad_scalar(&sigma, h).add_constant(cfg.sigma_s_sq);
    c.add_scaled(&corner, -1.0);
    bernstein_group_i(prob, &label, &a, &b, &c, xi)
}

/// Harvesting chance constraint at SU `k` (Gaussian errors).
pub fn gaussian_eh_constraints(
    prob: &mut ConicProblem,
    k: usize,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
    d_k: f64,
) -> Result<BernsteinGroup> {
    let corner = vars.q_expr().scale(d_k);
    gaussian_input_group(
        prob,
        k,
        ch,
        cfg,
        vars,
        corner,
        cfg.xi_ks,
        format!("harvest k={k}"),
    )
}

/// Input-power chance constraint `rho E_in >= tau_k` with outage `varpi`.
#[allow(clippy::too_many_arguments)]
pub fn gaussian_tau_constraints(
    prob: &mut ConicProblem,
    k: usize,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
    tau: ScalarVar,
    rho_fixed: f64,
    varpi: f64,
) -> Result<BernsteinGroup> {
    check_open_unit("rho", rho_fixed)?;
    let corner = AffineScalar::var(tau).scale(1.0 / rho_fixed);
    gaussian_input_group(prob, k, ch, cfg, vars, corner, varpi, format!("tau k={k}"))
}

/// Interference chance constraint at PU `n` (Gaussian errors).
pub fn gaussian_interference_constraints(
    prob: &mut ConicProblem,
    n: usize,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
) -> Result<BernsteinGroup> {
    let (_, pu_cov) = require_gaussian(ch)?;
    let s = psd_sqrt(&pu_cov[n], 1e-12)?;
    let g = &ch.g_hat[n];
    let sigma = vars.sigma();
    let a = congruence(&sigma, &s);
    let b = sigma.apply_vec(|m| &s * (m * g));
    let c = quad_scalar(&sigma, g).add_constant(-cfg.p_np);
    bernstein_group_ii(prob, &format!("interference n={n}"), &a, &b, &c, cfg.xi_np)
}

/// Nominal SINR constraint (perfect CSI).
pub fn nominal_rate(
    k: usize,
    i: usize,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
) -> AffineScalar {
    let gamma = cfg.gamma_min();
    let mut c =
        quad_scalar(&vars.c_k(k, gamma), &ch.h_hat[i]).add_constant(-gamma * cfg.sigma_s_sq);
    c.add_scaled(&vars.p_expr(), -gamma * cfg.sigma_d_sq);
    c
}

/// Nominal interference constraint (perfect CSI).
pub fn nominal_interference(
    n: usize,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
) -> AffineScalar {
    quad_scalar(&vars.sigma(), &ch.g_hat[n])
        .scale(-1.0)
        .add_constant(cfg.p_np)
}

/// Nominal input-power constraint against `corner` (perfect CSI).
pub fn nominal_input(
    k: usize,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
    corner: &AffineScalar,
) -> AffineScalar {
    let mut c = quad_scalar(&vars.sigma(), &ch.h_hat[k]).add_constant(cfg.sigma_s_sq);
    c.add_scaled(corner, -1.0);
    c
}

/// Rate constraints for every stream `k` at every SU `i >= k`, by uncertainty model.
pub fn add_rate_constraints(
    prob: &mut ConicProblem,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
) -> Result<()> {
    for k in 0..cfg.k {
        for i in k..cfg.k {
            match ch.uncertainty {
                UncertaintyModel::Perfect => {
                    let c = nominal_rate(k, i, ch, cfg, vars);
                    prob.add_nonneg(&format!("rate k={k} i={i}"), c);
                }
                UncertaintyModel::Bounded { .. } => {
                    let b = sproc_rate_lmi(prob, k, i, ch, cfg, vars)?;
                    prob.constraints.push(Constraint::Lmi(b));
                }
                UncertaintyModel::Gaussian { .. } => {
                    gaussian_rate_constraints(prob, k, i, ch, cfg, vars)?.add_to(prob);
                }
            }
        }
    }
    Ok(())
}

/// Interference constraints for every PU.
pub fn add_interference_constraints(
    prob: &mut ConicProblem,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
) -> Result<()> {
    for n in 0..ch.num_pu() {
        match ch.uncertainty {
            UncertaintyModel::Perfect => {
                let c = nominal_interference(n, ch, cfg, vars);
                prob.add_nonneg(&format!("interference n={n}"), c);
            }
            UncertaintyModel::Bounded { .. } => {
                let b = sproc_interference_lmi(prob, n, ch, cfg, vars)?;
                prob.constraints.push(Constraint::Lmi(b));
            }
            UncertaintyModel::Gaussian { .. } => {
                gaussian_interference_constraints(prob, n, ch, cfg, vars)?.add_to(prob);
            }
        }
    }
    Ok(())
}

/// Harvesting constraints `rho E_in >= d` at every SU.
pub fn add_eh_constraints(
    prob: &mut ConicProblem,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
    d: f64,
) -> Result<()> {
    for k in 0..cfg.k {
        match ch.uncertainty {
            UncertaintyModel::Perfect => {
                let c = nominal_input(k, ch, cfg, vars, &vars.q_expr().scale(d));
                prob.add_nonneg(&format!("harvest k={k}"), c);
            }
            UncertaintyModel::Bounded { .. } => {
                let b = sproc_eh_lmi(prob, k, ch, cfg, vars, d)?;
                prob.constraints.push(Constraint::Lmi(b));
            }
            UncertaintyModel::Gaussian { .. } => {
                gaussian_eh_constraints(prob, k, ch, cfg, vars, d)?.add_to(prob);
            }
        }
    }
    Ok(())
}

/// Input-power certificates `rho E_in >= tau_k` for a fixed split.
pub fn add_tau_constraints(
    prob: &mut ConicProblem,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    vars: &DesignVars,
    taus: &[ScalarVar],
    rho_fixed: f64,
    varpi: f64,
) -> Result<()> {
    for (k, &tau) in taus.iter().enumerate() {
        match ch.uncertainty {
            UncertaintyModel::Perfect => {
                let corner = AffineScalar::var(tau).scale(1.0 / rho_fixed);
                let c = nominal_input(k, ch, cfg, vars, &corner);
                prob.add_nonneg(&format!("tau k={k}"), c);
            }
            UncertaintyModel::Bounded { .. } => {
                let b = sproc_tau_lmi(prob, k, ch, cfg, vars, tau, rho_fixed)?;
                prob.constraints.push(Constraint::Lmi(b));
            }
            UncertaintyModel::Gaussian { .. } => {
                gaussian_tau_constraints(prob, k, ch, cfg, vars, tau, rho_fixed, varpi)?
                    .add_to(prob);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve, SolveStatus, SolverSettings};
    use crate::linalg::{c, min_eigenvalue, outer};
    use crate::stats::{ball_point, complex_gaussian};
    use crate::system_model::{draw_channels, sinr};
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bounded_setup(m: usize, k: usize, n: usize, seed: u64) -> (NetworkConfig, ChannelSet) {
        let cfg = NetworkConfig::reference(m, k, n);
        let ch = draw_channels(&cfg, 0.8, 0.1, seed)
            .unwrap()
            .with_uncertainty(UncertaintyModel::Bounded {
                su_radius: vec![0.15; k],
                pu_radius: vec![0.05; n],
            });
        (cfg, ch)
    }

    fn random_point(prob: &ConicProblem, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..prob.num_coords())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect()
    }

    #[test]
    fn rate_block_dimension_and_index_check() {
        let (cfg, ch) = bounded_setup(2, 2, 1, 1);
        let mut prob = ConicProblem::minimize();
        let vars = DesignVars::declare(&mut prob, &cfg, None).unwrap();
        let b = sproc_rate_lmi(&mut prob, 0, 1, &ch, &cfg, &vars).unwrap();
        assert_eq!(b.expr.dim, 3);
        assert!(matches!(
            sproc_rate_lmi(&mut prob, 1, 0, &ch, &cfg, &vars),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn builders_reject_wrong_model() {
        let cfg = NetworkConfig::reference(2, 1, 1);
        let ch = draw_channels(&cfg, 0.8, 0.1, 1).unwrap();
        let mut prob = ConicProblem::minimize();
        let vars = DesignVars::declare(&mut prob, &cfg, None).unwrap();
        assert!(sproc_interference_lmi(&mut prob, 0, &ch, &cfg, &vars).is_err());
        assert!(gaussian_interference_constraints(&mut prob, 0, &ch, &cfg, &vars).is_err());
    }

    #[test]
    fn blocks_are_affine_and_hermitian() {
        let (cfg, ch) = bounded_setup(2, 2, 1, 3);
        let mut prob = ConicProblem::minimize();
        let vars = DesignVars::declare(&mut prob, &cfg, None).unwrap();
        let blocks = vec![
            sproc_rate_lmi(&mut prob, 0, 1, &ch, &cfg, &vars).unwrap(),
            sproc_interference_lmi(&mut prob, 0, &ch, &cfg, &vars).unwrap(),
            sproc_eh_lmi(&mut prob, 1, &ch, &cfg, &vars, 0.02).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let zero = vec![0.0; prob.num_coords()];
        for blk in &blocks {
            let x = random_point(&prob, &mut rng);
            let y = random_point(&prob, &mut rng);
            let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let defect =
                blk.expr.eval(&sum) - blk.expr.eval(&x) - blk.expr.eval(&y) + blk.expr.eval(&zero);
            assert!(defect.norm() < 1e-12);
            let fx = blk.expr.eval(&x);
            assert!((&fx - fx.adjoint()).norm() < 1e-12);
        }
    }

    /// Fix the design variables and search for multipliers making every block PSD.
    fn solve_for_slacks(
        prob: ConicProblem,
        vars: &DesignVars,
        w: &[CMat],
        v: &CMat,
        rho: f64,
    ) -> Option<Vec<f64>> {
        let mut p = prob;
        let mut val = vec![0.0; p.num_coords()];
        let mut fixed: Vec<MatVar> = vars.w.clone();
        for (k, wk) in vars.w.iter().enumerate() {
            wk.assign(&w[k], &mut val);
        }
        if let Some(vv) = vars.v {
            vv.assign(v, &mut val);
            fixed.push(vv);
        }
        for mv in fixed {
            for (idx, _) in mv.coords() {
                p.add_zero(
                    "fix",
                    AffineScalar::var(ScalarVar { index: idx }).add_constant(-val[idx]),
                );
            }
        }
        if let Split::Variable { rho: r, p: pv, q } = vars.split {
            p.add_zero("rho", AffineScalar::var(r).add_constant(-rho));
            p.add_zero("p", AffineScalar::var(pv).add_constant(-1.0 / (1.0 - rho)));
            p.add_zero("q", AffineScalar::var(q).add_constant(-1.0 / rho));
        }
        let sol = solve(&p, &SolverSettings::default());
        (sol.status == SolveStatus::Optimal).then_some(sol.x)
    }

    #[test]
    fn zero_radius_rate_block_is_nominal_constraint() {
        let cfg = NetworkConfig::reference(2, 1, 0);
        let ch =
            draw_channels(&cfg, 0.8, 0.1, 5)
                .unwrap()
                .with_uncertainty(UncertaintyModel::Bounded {
                    su_radius: vec![0.0],
                    pu_radius: vec![],
                });
        let gamma = cfg.gamma_min();
        let h = ch.h_hat[0].clone();
        let dir = h.normalize();
        let rho = 0.5;
        let need = gamma * (cfg.sigma_s_sq + cfg.sigma_d_sq / (1.0 - rho)) / h.norm_squared();
        for (scale, expect) in [(1.05, true), (0.95, false)] {
            let mut prob = ConicProblem::minimize();
            let vars = DesignVars::declare(&mut prob, &cfg, None).unwrap();
            let blk = sproc_rate_lmi(&mut prob, 0, 0, &ch, &cfg, &vars).unwrap();
            prob.constraints.push(Constraint::Lmi(blk));
            let w = outer(&dir).scale(need * scale);
            let found = solve_for_slacks(prob, &vars, &[w], &CMat::zeros(2, 2), rho).is_some();
            assert_eq!(found, expect, "scale {scale}");
        }
    }

    #[test]
    fn rate_lmi_is_sound_over_the_ball() {
        let (cfg, ch) = bounded_setup(3, 2, 0, 12);
        let rho = 0.4;
        let gamma = cfg.gamma_min();
        // stream 0 steered at its decoding receiver, stream 1 weak
        let w = vec![
            outer(&ch.h_hat[1].normalize()).scale(3.0),
            CMat::identity(3, 3).scale(0.01),
        ];
        let v = CMat::zeros(3, 3);
        let mut prob = ConicProblem::minimize();
        let vars = DesignVars::declare(&mut prob, &cfg, None).unwrap();
        let blk = sproc_rate_lmi(&mut prob, 0, 1, &ch, &cfg, &vars).unwrap();
        prob.constraints.push(Constraint::Lmi(blk.clone()));
        let x = solve_for_slacks(prob, &vars, &w, &v, rho).expect("instance should be feasible");
        assert!(min_eigenvalue(&blk.expr.eval(&x)) > -1e-7);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for s in 0..10_000 {
            let dh = ball_point(&mut rng, 3, ch.su_radius(1), s % 2 == 0);
            let g = sinr(1, 0, &w, &v, rho, &dh, &ch, &cfg).unwrap();
            assert!(g >= gamma * (1.0 - 1e-6), "sample {s}: {g}");
        }
    }

    #[test]
    fn interference_lmi_is_sound_over_the_ball() {
        let mut cfg = NetworkConfig::reference(3, 1, 1);
        cfg.p_np = 0.05;
        let ch =
            draw_channels(&cfg, 0.8, 0.1, 4)
                .unwrap()
                .with_uncertainty(UncertaintyModel::Bounded {
                    su_radius: vec![0.1],
                    pu_radius: vec![0.05],
                });
        // beam orthogonal-ish to g with small power
        let w = vec![outer(&ch.h_hat[0].normalize()).scale(0.3)];
        let v = CMat::zeros(3, 3);
        let mut prob = ConicProblem::minimize();
        let vars = DesignVars::declare(&mut prob, &cfg, None).unwrap();
        let blk = sproc_interference_lmi(&mut prob, 0, &ch, &cfg, &vars).unwrap();
        prob.constraints.push(Constraint::Lmi(blk));
        if let Some(_x) = solve_for_slacks(prob, &vars, &w, &v, 0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for s in 0..10_000 {
                let dg = ball_point(&mut rng, 3, 0.05, s % 2 == 0);
                let g = &ch.g_hat[0] + dg;
                assert!(quad_form(&g, &w[0]) <= cfg.p_np * (1.0 + 1e-6));
            }
        } else {
            // infeasible at this power: worst case must exceed the limit
            let worst =
                (libm::sqrt(quad_form(&ch.g_hat[0], &w[0])) + 0.05 * libm::sqrt(0.3)).powi(2);
            assert!(worst > cfg.p_np);
        }
    }

    #[test]
    fn zero_interference_feasible_with_zero_multiplier() {
        let (cfg, ch) = bounded_setup(2, 1, 1, 2);
        let mut prob = ConicProblem::minimize();
        let vars = DesignVars::declare(&mut prob, &cfg, Some(0.5)).unwrap();
        let blk = sproc_interference_lmi(&mut prob, 0, &ch, &cfg, &vars).unwrap();
        let x = vec![0.0; prob.num_coords()];
        assert!(min_eigenvalue(&blk.expr.eval(&x)) >= -1e-15);
    }

    #[test]
    fn eh_lmi_is_sound_over_the_ball() {
        let (cfg, ch) = bounded_setup(3, 1, 0, 9);
        let rho = 0.6;
        let d = 0.03;
        let w = vec![outer(&ch.h_hat[0].normalize()).scale(0.5)];
        let v = CMat::zeros(3, 3);
        let mut prob = ConicProblem::minimize();
        let vars = DesignVars::declare(&mut prob, &cfg, None).unwrap();
        let blk = sproc_eh_lmi(&mut prob, 0, &ch, &cfg, &vars, d).unwrap();
        prob.constraints.push(Constraint::Lmi(blk));
        let x = solve_for_slacks(prob, &vars, &w, &v, rho).expect("feasible");
        let _ = x;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for s in 0..10_000 {
            let dh = ball_point(&mut rng, 3, ch.su_radius(0), s % 2 == 0);
            let h = &ch.h_hat[0] + dh;
            let e = crate::eh_model::input_power(&h, &w, &v, rho, cfg.sigma_s_sq).unwrap();
            assert!(e >= d * (1.0 - 1e-6));
        }
    }

    #[test]
    fn tau_lmi_nominal_reduction() {
        let cfg = NetworkConfig::reference(2, 1, 0);
        let ch =
            draw_channels(&cfg, 0.8, 0.1, 3)
                .unwrap()
                .with_uncertainty(UncertaintyModel::Bounded {
                    su_radius: vec![0.0],
                    pu_radius: vec![],
                });
        let mut prob = ConicProblem::minimize();
        let vars = DesignVars::declare(&mut prob, &cfg, Some(0.3)).unwrap();
        let tau = prob.add_scalar("tau", true);
        let blk = sproc_tau_lmi(&mut prob, 0, &ch, &cfg, &vars, tau, 0.3).unwrap();
        let mut x = vec![0.0; prob.num_coords()];
        let w = CMat::identity(2, 2).scale(0.2);
        vars.w[0].assign(&w, &mut x);
        let e_in = 0.3 * (quad_form(&ch.h_hat[0], &w) + cfg.sigma_s_sq);
        // zero radius: a large multiplier leaves only the scalar corner
        let theta = tau.index + 1;
        x[theta] = 1e4;
        x[tau.index] = e_in * 0.999;
        assert!(min_eigenvalue(&blk.expr.eval(&x)) >= -1e-12);
        x[tau.index] = e_in * 1.01;
        for t in [0.0, 1.0, 1e4, 1e8] {
            x[theta] = t;
            assert!(min_eigenvalue(&blk.expr.eval(&x)) < 0.0);
        }
        assert!(sproc_tau_lmi(&mut prob, 0, &ch, &cfg, &vars, tau, 1.0).is_err());
    }

    /// Scalar Bernstein check: `f(z) = a |z|^2 + c` with `z ~ CN(0, 1)`.
    fn scalar_group_outage(a: f64, cval: f64, xi: f64, upper: bool) -> Option<f64> {
        let mut prob = ConicProblem::maximize();
        let dummy = prob.add_scalar("t", false);
        prob.set_objective(AffineScalar::var(dummy).scale(0.0));
        let am = AffineHermitian::constant(CMat::from_element(1, 1, c(a, 0.0)));
        let bv = AffineVector::constant(CVec::zeros(1));
        let cs = AffineScalar::constant(cval);
        let grp = if upper {
            bernstein_group_ii(&mut prob, "g", &am, &bv, &cs, xi).unwrap()
        } else {
            bernstein_group_i(&mut prob, "g", &am, &bv, &cs, xi).unwrap()
        };
        grp.add_to(&mut prob);
        let sol = solve(&prob, &SolverSettings::default());
        if sol.status != SolveStatus::Optimal {
            return None;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut bad = 0;
        for _ in 0..n {
            let z = complex_gaussian(&mut rng, 1, 1.0)[0];
            let f = a * z.norm_sqr() + cval;
            if (upper && f > 0.0) || (!upper && f < 0.0) {
                bad += 1;
            }
        }
        Some(bad as f64 / n as f64)
    }

    #[test]
    fn bernstein_scalar_soundness() {
        let xi: f64 = 0.05;
        // Pr{|z|^2 >= 0.5 * something}: f = -|z|^2 + c >= 0 needs c large
        for cval in [2.0, 3.0, 4.0, 6.0] {
            if let Some(out) = scalar_group_outage(-1.0, cval, xi, false) {
                let se = (xi * (1.0 - xi) / 100_000.0).sqrt();
                assert!(out <= xi + 3.0 * se, "c={cval}: {out}");
            }
        }
        for cval in [-2.0, -3.0, -4.0, -6.0] {
            if let Some(out) = scalar_group_outage(1.0, cval, xi, true) {
                let se = (xi * (1.0 - xi) / 100_000.0).sqrt();
                assert!(out <= xi + 3.0 * se, "c={cval}: {out}");
            }
        }
        // deterministic case: c >= 0 feasible, c < 0 infeasible
        assert!(scalar_group_outage(0.0, 0.1, xi, false).is_some());
        assert!(scalar_group_outage(0.0, -0.1, xi, false).is_none());
        assert!(scalar_group_outage(0.0, -0.1, xi, true).is_some());
        assert!(scalar_group_outage(0.0, 0.1, xi, true).is_none());
        // xi = 1 removes the outage protection: a |z|^2 + c with Tr(A) + c >= 0
        assert!(scalar_group_outage(-1.0, 1.0, 1.0, false).is_some());
        assert!(scalar_group_outage(-1.0, 0.9, 1.0, false).is_none());
    }

    #[test]
    fn bernstein_group_structure() {
        let mut prob = ConicProblem::minimize();
        let x = prob.add_hermitian("X", 2, false);
        let a = AffineHermitian::identity_map(x);
        let b = a.apply_vec(|m| m * CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]));
        let cs = AffineScalar::constant(0.5);
        let g = bernstein_group_i(&mut prob, "grp", &a, &b, &cs, 0.05).unwrap();
        assert_eq!(g.lmi.expr.dim, 2);
        assert_eq!(g.soc.vector.len(), 4 + 2);
        // coefficient of u1 in the linear part
        let coef = g
            .linear
            .terms
            .iter()
            .find(|t| t.0 == g.upsilon1.index)
            .unwrap()
            .1;
        assert!((coef + (-2.0 * 0.05f64.ln()).sqrt()).abs() < 1e-15);
        let coef2 = g
            .linear
            .terms
            .iter()
            .find(|t| t.0 == g.upsilon2.index)
            .unwrap()
            .1;
        assert!((coef2 - 0.05f64.ln()).abs() < 1e-15);
        assert!(bernstein_group_i(&mut prob, "bad", &a, &b, &cs, 0.0).is_err());
        assert!(bernstein_group_ii(&mut prob, "bad", &a, &b, &cs, 1.5).is_err());
    }

    #[test]
    fn zero_covariance_gaussian_is_nominal() {
        let cfg = NetworkConfig::reference(2, 1, 0);
        let ch = draw_channels(&cfg, 0.8, 0.1, 5).unwrap().with_uncertainty(
            UncertaintyModel::Gaussian {
                su_cov: vec![CMat::zeros(2, 2)],
                pu_cov: vec![],
            },
        );
        let mut prob = ConicProblem::minimize();
        let vars = DesignVars::declare(&mut prob, &cfg, Some(0.5)).unwrap();
        let g = gaussian_rate_constraints(&mut prob, 0, 0, &ch, &cfg, &vars).unwrap();
        let nominal = nominal_rate(0, 0, &ch, &cfg, &vars);
        let mut x = vec![0.0; prob.num_coords()];
        vars.w[0].assign(&CMat::identity(2, 2), &mut x);
        // with A = 0 and b = 0 the multipliers can be zero, leaving the nominal constraint
        assert!((g.linear.eval(&x) - nominal.eval(&x)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn gaussian_groups_are_affine(seed in 0u64..20, lambda in 0.0f64..1.0) {
            let cfg = NetworkConfig::reference(2, 2, 1);
            let ch = draw_channels(&cfg, 0.8, 0.1, seed)
                .unwrap()
                .with_uncertainty(UncertaintyModel::gaussian_isotropic(&cfg, 0.001, 0.0001));
            let mut prob = ConicProblem::minimize();
            let vars = DesignVars::declare(&mut prob, &cfg, None).unwrap();
            let g = gaussian_rate_constraints(&mut prob, 0, 1, &ch, &cfg, &vars).unwrap();
            let h = gaussian_interference_constraints(&mut prob, 0, &ch, &cfg, &vars).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_point(&prob, &mut rng);
            let y = random_point(&prob, &mut rng);
            let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            for grp in [&g, &h] {
                let lhs = grp.lmi.expr.eval(&mix);
                let rhs = grp.lmi.expr.eval(&x).scale(lambda) + grp.lmi.expr.eval(&y).scale(1.0 - lambda);
                prop_assert!((lhs - rhs).norm() < 1e-10);
                let l = grp.linear.eval(&mix);
                let r = lambda * grp.linear.eval(&x) + (1.0 - lambda) * grp.linear.eval(&y);
                prop_assert!((l - r).abs() < 1e-10);
            }
        }
    }
}
