//! Harvested-energy maximisation: parametric (sum-of-ratios) transformation of
//! the logistic objective, a damped Newton outer loop on the weights `(mu, eps)`
//! and a grid search over the power-splitting ratio.

use alloc::format;
use alloc::vec::Vec;

use crate::conic::{solve, AffineScalar, ConicProblem, ScalarVar, SolveStatus, SolverSettings};
use crate::eh_model::{harvested_power, input_power, EhParams};
use crate::error::{check_open_unit, Error, Result};
use crate::power_min::{check_inputs, default_settings, BeamformingSolution};
use crate::robust::{
    add_interference_constraints, add_rate_constraints, add_tau_constraints, DesignVars,
};
use crate::system_model::{ChannelSet, NetworkConfig};

/// Outer-loop and grid parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EhMaxSettings {
    pub rho_grid: Vec<f64>,
    /// Stop once the optimality residual drops below this.
    pub m_th: f64,
    pub max_outer: usize,
    /// Armijo factor of the backtracking rule.
    pub backtrack_t: f64,
    pub backtrack_shrink: f64,
    pub max_backtracks: usize,
    /// Outage of the input-power certificate under Gaussian errors.
    pub varpi: f64,
    pub solver: SolverSettings,
}

impl Default for EhMaxSettings {
    fn default() -> Self {
        Self {
            rho_grid: rho_grid(0.05, 0.05, 0.95).expect("default grid is valid"),
            m_th: 1e-6,
            max_outer: 30,
            backtrack_t: 0.1,
            backtrack_shrink: 0.5,
            max_backtracks: 30,
            varpi: 0.01,
            solver: default_settings(),
        }
    }
}

impl EhMaxSettings {
    pub fn validate(&self) -> Result<()> {
        if self.rho_grid.is_empty() {
            return Err(Error::Config("empty rho grid".into()));
        }
        for &rho in &self.rho_grid {
            check_open_unit("rho", rho)?;
        }
        check_open_unit("backtrack_t", self.backtrack_t)?;
        check_open_unit("backtrack_shrink", self.backtrack_shrink)?;
        check_open_unit("varpi", self.varpi)?;
        if !(self.m_th > 0.0) || self.max_outer == 0 {
            return Err(Error::Config(
                "m_th must be positive and max_outer at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `start, start + step, ..., end` (end included when it lies on the grid).
pub fn rho_grid(start: f64, step: f64, end: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(end >= start) {
        return Err(Error::Config(format!("bad rho grid {start}:{step}:{end}")));
    }
    let n = libm::floor((end - start) / step + 1e-9) as usize + 1;
    let grid: Vec<f64> = (0..n).map(|i| start + i as f64 * step).collect();
    for &rho in &grid {
        check_open_unit("rho", rho)?;
    }
    Ok(grid)
}

/// Weights of the parametric problem and the latest certified input powers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricState {
    pub mu: Vec<f64>,
    pub eps: Vec<f64>,
    pub tau: Vec<f64>,
    pub iteration: usize,
    /// `‖F(mu, eps)‖` at `tau`.
    pub residual: f64,
}

impl ParametricState {
    /// `mu_k = 1 - Omega`, `eps_k = M / 2`.
    pub fn initial(k: usize, eh: &EhParams) -> Self {
        Self {
            mu: alloc::vec![1.0 - eh.omega(); k],
            eps: alloc::vec![eh.saturation() / 2.0; k],
            tau: alloc::vec![eh.turn_on(); k],
            iteration: 0,
            residual: f64::INFINITY,
        }
    }

    pub fn with_tau(mut self, tau: Vec<f64>, eh: &EhParams) -> Self {
        self.tau = tau;
        self.residual = norm(&check_optimality_conditions(&self, eh));
        self
    }
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn residuals(mu: &[f64], eps: &[f64], tau: &[f64], eh: &EhParams) -> Vec<f64> {
    let k = tau.len();
    let mut out = Vec::with_capacity(2 * k);
    for j in 0..k {
        out.push(eps[j] * eh.denominator(tau[j]) - eh.saturation());
    }
    for j in 0..k {
        out.push(mu[j] * eh.denominator(tau[j]) - 1.0);
    }
    out
}

/// `F(mu, eps)`: the `eps` components for every SU followed by the `mu` components.
pub fn check_optimality_conditions(state: &ParametricState, eh: &EhParams) -> Vec<f64> {
    residuals(&state.mu, &state.eps, &state.tau, eh)
}

/// `|mu_k (M - eps_k D_k(tau_k))|` per SU.
pub fn stop_measure(state: &ParametricState, eh: &EhParams) -> Vec<f64> {
    state
        .tau
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            libm::fabs(state.mu[j] * (eh.saturation() - state.eps[j] * eh.denominator(t)))
        })
        .collect()
}

/// Damped Newton step on `F` with `tau` held fixed.
pub fn update_mu_eps(
    state: &ParametricState,
    eh: &EhParams,
    settings: &EhMaxSettings,
) -> Result<ParametricState> {
    if state.tau.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("tau"));
    }
    let f0 = residuals(&state.mu, &state.eps, &state.tau, eh);
    let n0 = norm(&f0);
    let k = state.tau.len();
    let d: Vec<f64> = state.tau.iter().map(|&t| eh.denominator(t)).collect();
    // the Jacobian is diagonal: dF_eps/d eps = D, dF_mu/d mu = D
    let d_eps: Vec<f64> = (0..k).map(|j| -f0[j] / d[j]).collect();
    let d_mu: Vec<f64> = (0..k).map(|j| -f0[k + j] / d[j]).collect();
    let mut step = 1.0;
    let mut next = state.clone();
    for _ in 0..=settings.max_backtracks {
        let mu: Vec<f64> = (0..k).map(|j| state.mu[j] + step * d_mu[j]).collect();
        let eps: Vec<f64> = (0..k).map(|j| state.eps[j] + step * d_eps[j]).collect();
        let n1 = norm(&residuals(&mu, &eps, &state.tau, eh));
        next.mu = mu;
        next.eps = eps;
        next.residual = n1;
        if n1 <= (1.0 - settings.backtrack_t * step) * n0 {
            break;
        }
        step *= settings.backtrack_shrink;
    }
    next.iteration = state.iteration + 1;
    Ok(next)
}

/// Maximise `sum_k mu_k (M - eps_k (1 + exp(-a (tau_k - b))))` for a fixed split.
/// Returns the solution and the certified input powers `tau`.
pub fn solve_inner(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    mu: &[f64],
    eps: &[f64],
    rho: f64,
    settings: &EhMaxSettings,
) -> Result<(BeamformingSolution, Vec<f64>)> {
    let (prob, vars, taus) = build_inner(cfg, ch, mu, eps, rho, settings.varpi)?;
    let sol = solve(&prob, &settings.solver);
    let tau = taus.iter().map(|&t| sol.scalar(t)).collect();
    Ok((BeamformingSolution::from_solution(&prob, &vars, &sol), tau))
}

/// Conic form of the inner problem: `s_k >= exp(-a (tau_k - b))` through exponential cones.
pub fn build_inner(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    mu: &[f64],
    eps: &[f64],
    rho: f64,
    varpi: f64,
) -> Result<(ConicProblem, DesignVars, Vec<ScalarVar>)> {
    check_inputs(cfg, ch)?;
    if mu.len() != cfg.k || eps.len() != cfg.k {
        return Err(Error::Dimension {
            expected: cfg.k,
            got: mu.len().min(eps.len()),
        });
    }
    if mu.iter().chain(eps).any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(Error::Config(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let eh = &cfg.eh;
    let mut prob = ConicProblem::maximize();
    let vars = DesignVars::declare(&mut prob, cfg, Some(rho))?;
    let mut objective = AffineScalar::zero();
    let mut taus = Vec::with_capacity(cfg.k);
    for k in 0..cfg.k {
        let tau = prob.add_scalar(&format!("tau{k}"), false);
        let s = prob.add_scalar(&format!("s{k}"), false);
        let x = AffineScalar::var(tau)
            .scale(-eh.slope())
            .add_constant(eh.slope() * eh.turn_on());
        prob.add_exp(
            &format!("logistic k={k}"),
            x,
            AffineScalar::constant(1.0),
            AffineScalar::var(s),
        );
        objective = objective.add_constant(mu[k] * (eh.saturation() - eps[k]));
        objective.add_scaled(&AffineScalar::var(s), -mu[k] * eps[k]);
        taus.push(tau);
    }
    prob.set_objective(objective);
    add_rate_constraints(&mut prob, ch, cfg, &vars)?;
    add_interference_constraints(&mut prob, ch, cfg, &vars)?;
    add_tau_constraints(&mut prob, ch, cfg, &vars, &taus, rho, varpi)?;
    let power = vars.total_power();
    prob.add_nonneg(
        "power budget",
        AffineScalar::constant(cfg.p_b).add(&power.scale(-1.0)),
    );
    Ok((prob, vars, taus))
}

/// Harvested power per SU evaluated on the estimated channels.
pub fn nominal_harvest(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    sol: &BeamformingSolution,
) -> Result<Vec<f64>> {
    ch.h_hat
        .iter()
        .map(|h| {
            input_power(h, &sol.w, &sol.v, sol.rho, cfg.sigma_s_sq)
                .map(|e| harvested_power(e, &cfg.eh))
        })
        .collect()
}

/// Summary of the outer loop at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub rho: f64,
    /// Status of the last inner solve.
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub converged: bool,
    pub residual: f64,
    /// `sum_k harvested_power(tau_k)` (NaN when infeasible).
    pub harvested: f64,
    /// `sum_k` harvested power on the estimated channels (NaN when infeasible).
    pub harvested_nominal: f64,
}

/// Full outcome at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub point: GridPoint,
    pub solution: Option<BeamformingSolution>,
    pub state: ParametricState,
    /// Residual norms after each inner solve.
    pub history: Vec<f64>,
}

/// Outer loop for one value of the split.
pub fn solve_grid_point(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    rho: f64,
    settings: &EhMaxSettings,
) -> Result<GridOutcome> {
    check_open_unit("rho", rho)?;
    let eh = cfg.eh;
    let mut state = ParametricState::initial(cfg.k, &eh);
    let mut history = Vec::new();
    let mut last: Option<BeamformingSolution> = None;
    let mut status = SolveStatus::Optimal;
    let mut converged = false;
    for _ in 0..settings.max_outer {
        let (sol, tau) = solve_inner(cfg, ch, &state.mu, &state.eps, rho, settings)?;
        if !sol.is_optimal() {
            status = sol.status;
            last = None;
            break;
        }
        state = state.with_tau(tau, &eh);
        history.push(state.residual);
        last = Some(sol);
        if state.residual < settings.m_th {
            converged = true;
            break;
        }
        state = update_mu_eps(&state, &eh, settings)?;
    }
    let (harvested, harvested_nominal) = match &last {
        Some(sol) => (
            state.tau.iter().map(|&t| harvested_power(t, &eh)).sum(),
            nominal_harvest(cfg, ch, sol)?.iter().sum(),
        ),
        None => (f64::NAN, f64::NAN),
    };
    Ok(GridOutcome {
        point: GridPoint {
            rho,
            status,
            outer_iterations: history.len(),
            converged,
            residual: history.last().copied().unwrap_or(f64::NAN),
            harvested,
            harvested_nominal,
        },
        solution: last,
        state,
        history,
    })
}

/// Best grid point and the per-point trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EhMaxResult {
    /// `Optimal` when at least one grid point was solved, otherwise the status of the first point.
    pub status: SolveStatus,
    pub rho: f64,
    pub solution: Option<BeamformingSolution>,
    pub state: Option<ParametricState>,
    pub tau: Vec<f64>,
    /// Certified total harvested power (from `tau`).
    pub harvested: f64,
    /// Total harvested power on the estimated channels.
    pub harvested_nominal: f64,
    pub trace: Vec<GridPoint>,
}

impl EhMaxResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Pick the grid maximiser of the certified harvested power.
pub fn combine_grid(outcomes: Vec<GridOutcome>) -> EhMaxResult {
    let trace: Vec<GridPoint> = outcomes.iter().map(|o| o.point.clone()).collect();
    let best = outcomes.into_iter().filter(|o| o.solution.is_some()).fold(
        None::<GridOutcome>,
        |acc, o| match acc {
            Some(a) if a.point.harvested >= o.point.harvested => Some(a),
            _ => Some(o),
        },
    );
    match best {
        Some(b) => EhMaxResult {
            status: SolveStatus::Optimal,
            rho: b.point.rho,
            tau: b.state.tau.clone(),
            harvested: b.point.harvested,
            harvested_nominal: b.point.harvested_nominal,
            solution: b.solution,
            state: Some(b.state),
            trace,
        },
        None => EhMaxResult {
            status: trace.first().map_or(SolveStatus::Infeasible, |p| p.status),
            rho: f64::NAN,
            solution: None,
            state: None,
            tau: Vec::new(),
            harvested: f64::NAN,
            harvested_nominal: f64::NAN,
            trace,
        },
    }
}

/// Grid search over the split with the parametric outer loop at each point.
pub fn solve_eh_max(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    settings: &EhMaxSettings,
) -> Result<EhMaxResult> {
    settings.validate()?;
    check_inputs(cfg, ch)?;
    let outcomes = settings
        .rho_grid
        .iter()
        .map(|&rho| solve_grid_point(cfg, ch, rho, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_grid(outcomes))
}

/// Orthogonal baseline: one SU per slot with rate target `K r_min`; each SU
/// harvests only in its own slot, so totals are averaged over the `K` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct OmaEhResult {
    pub slots: Vec<EhMaxResult>,
    pub status: SolveStatus,
    pub harvested: f64,
    pub harvested_nominal: f64,
}

pub fn solve_eh_max_oma(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    settings: &EhMaxSettings,
) -> Result<OmaEhResult> {
    check_inputs(cfg, ch)?;
    let slot_cfg = crate::power_min::oma_slot_config(cfg);
    let slots = (0..cfg.k)
        .map(|k| solve_eh_max(&slot_cfg, &ch.single_user(k), settings))
        .collect::<Result<Vec<_>>>()?;
    let status = slots
        .iter()
        .find(|s| !s.is_optimal())
        .map_or(SolveStatus::Optimal, |s| s.status);
    let share = 1.0 / cfg.k as f64;
    let (harvested, harvested_nominal) = if status == SolveStatus::Optimal {
        (
            share * slots.iter().map(|s| s.harvested).sum::<f64>(),
            share * slots.iter().map(|s| s.harvested_nominal).sum::<f64>(),
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(OmaEhResult {
        slots,
        status,
        harvested,
        harvested_nominal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, hermitian_eigen, CVec};
    use crate::stats::ball_point;
    use crate::system_model::{draw_channels, UncertaintyModel};
    use alloc::vec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn settings(grid: &[f64]) -> EhMaxSettings {
        EhMaxSettings {
            rho_grid: grid.to_vec(),
            ..EhMaxSettings::default()
        }
    }

    fn eh() -> EhParams {
        EhParams::reference()
    }

    #[test]
    fn grid_helper_includes_end_points() {
        let g = rho_grid(0.05, 0.05, 0.95).unwrap();
        assert_eq!(g.len(), 19);
        assert!((g[18] - 0.95).abs() < 1e-12);
        assert_eq!(rho_grid(0.5, 0.1, 0.5).unwrap(), vec![0.5]);
        assert!(rho_grid(0.0, 0.1, 0.5).is_err());
        assert!(rho_grid(0.5, 0.1, 0.4).is_err());
    }

    #[test]
    fn fixed_point_at_turn_on() {
        let e = eh();
        let state = ParametricState {
            mu: vec![0.5],
            eps: vec![0.012],
            tau: vec![e.turn_on()],
            iteration: 0,
            residual: 0.0,
        };
        let r = check_optimality_conditions(&state, &e);
        assert!(r.iter().all(|x| x.abs() < 1e-15));
        let next = update_mu_eps(&state, &e, &EhMaxSettings::default()).unwrap();
        assert_eq!(next.mu, state.mu);
        assert_eq!(next.eps, state.eps);
        assert_eq!(next.residual, 0.0);
    }

    #[test]
    fn residual_positive_away_from_fixed_point() {
        let e = eh();
        let state = ParametricState::initial(2, &e).with_tau(vec![0.0, 0.03], &e);
        assert!(state.residual > 0.0);
        assert!(stop_measure(&state, &e).iter().all(|x| *x > 0.0));
    }

    #[test]
    fn newton_step_matches_finite_difference_of_scalarised_objective() {
        let e = eh();
        let tau = [0.005, 0.02];
        let mu = [0.3, 0.7];
        let eps = [0.01, 0.02];
        let phi = |mu: &[f64], eps: &[f64]| -> f64 {
            (0..2)
                .map(|k| {
                    mu[k]
                        * (e.saturation()
                            - eps[k] * (1.0 + (-e.slope() * (tau[k] - e.turn_on())).exp()))
                })
                .sum()
        };
        let state = ParametricState {
            mu: mu.to_vec(),
            eps: eps.to_vec(),
            tau: tau.to_vec(),
            iteration: 0,
            residual: 0.0,
        };
        let f = check_optimality_conditions(&state, &e);
        let h = 1e-6;
        for k in 0..2 {
            let mut mp = mu;
            mp[k] += h;
            let mut mm = mu;
            mm[k] -= h;
            let d_mu = (phi(&mp, &eps) - phi(&mm, &eps)) / (2.0 * h);
            assert!((f[k] + d_mu).abs() < 1e-8, "eps component {k}");
            let mut ep = eps;
            ep[k] += h;
            let mut em = eps;
            em[k] -= h;
            let d_eps = (phi(&mu, &ep) - phi(&mu, &em)) / (2.0 * h);
            assert!((f[2 + k] + d_eps + 1.0).abs() < 1e-8, "mu component {k}");
        }
    }

    proptest! {
        #[test]
        fn one_undamped_step_reaches_fixed_point(
            mu in proptest::collection::vec(0.01f64..1.0, 3),
            eps in proptest::collection::vec(0.001f64..0.024, 3),
            tau in proptest::collection::vec(0.0f64..0.1, 3),
        ) {
            let e = eh();
            let state = ParametricState { mu, eps, tau: tau.clone(), iteration: 0, residual: 0.0 };
            let next = update_mu_eps(&state, &e, &EhMaxSettings::default()).unwrap();
            for k in 0..3 {
                let d = 1.0 + (-e.slope() * (tau[k] - e.turn_on())).exp();
                prop_assert!((next.mu[k] - 1.0 / d).abs() < 1e-12);
                prop_assert!((next.eps[k] - e.saturation() / d).abs() < 1e-14);
                prop_assert!(next.mu[k] > 0.0 && next.mu[k] <= 1.0);
                prop_assert!(next.eps[k] > 0.0 && next.eps[k] <= e.saturation());
            }
            prop_assert!(next.residual < 1e-12);
        }
    }

    #[test]
    fn non_finite_tau_is_rejected() {
        let e = eh();
        let mut state = ParametricState::initial(1, &e);
        state.tau = vec![f64::NAN];
        assert_eq!(
            update_mu_eps(&state, &e, &EhMaxSettings::default()),
            Err(Error::NonFinite("tau"))
        );
    }

    #[test]
    fn inner_problem_is_conic_with_exponential_cones() {
        let cfg = NetworkConfig::reference(2, 2, 1);
        let ch = draw_channels(&cfg, 0.8, 0.1, 4).unwrap();
        let (prob, _, taus) =
            build_inner(&cfg, &ch, &[0.5, 0.5], &[0.01, 0.01], 0.5, 0.01).unwrap();
        let n_exp = prob
            .constraints
            .iter()
            .filter(|c| matches!(c, crate::conic::Constraint::Exp(_)))
            .count();
        assert_eq!(n_exp, 2);
        assert_eq!(taus.len(), 2);
    }

    /// With no rate target and no PU, all power goes to the best direction for the
    /// single SU; the certified input is the worst case over the ball at full power.
    #[test]
    fn single_user_pours_budget_into_worst_case_direction() {
        let mut cfg = NetworkConfig::reference(3, 1, 0);
        cfg.r_min = 0.0;
        cfg.p_b = 0.05;
        let h = CVec::from_vec(vec![c(0.6, 0.1), c(-0.2, 0.3), c(0.1, -0.4)]);
        let radius = 0.1;
        let ch = ChannelSet::new(
            vec![h.clone()],
            vec![],
            UncertaintyModel::Bounded {
                su_radius: vec![radius],
                pu_radius: vec![],
            },
        );
        let rho = 0.5;
        let out = solve_grid_point(&cfg, &ch, rho, &settings(&[rho])).unwrap();
        assert!(out.point.converged);
        // fixed beam along h at full power; worst case error points against it
        let worst = rho * (cfg.p_b * (h.norm() - radius).powi(2) + cfg.sigma_s_sq);
        let tau = out.state.tau[0];
        assert!(
            (tau - worst).abs() < 1e-6 * worst.max(1.0),
            "{tau} vs {worst}"
        );
        // sampling the ball around the returned solution never drops below tau
        let sol = out.solution.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for i in 0..2000 {
            let dh = ball_point(&mut rng, 3, radius, i % 2 == 0);
            let e_in = input_power(&(&h + dh), &sol.w, &sol.v, rho, cfg.sigma_s_sq).unwrap();
            assert!(e_in >= tau - 1e-7);
        }
        // the solution is rank one along h
        let (vals, vecs) = hermitian_eigen(&(&sol.w[0] + &sol.v));
        let top = vecs.column(vals.len() - 1).into_owned();
        let align = (top.dotc(&h)).norm() / h.norm();
        assert!(align > 1.0 - 1e-5);
    }

    #[test]
    fn zero_weights_give_zero_objective() {
        let cfg = NetworkConfig::reference(2, 1, 0);
        let ch = draw_channels(&cfg, 0.8, 0.1, 2).unwrap();
        let (sol, _) =
            solve_inner(&cfg, &ch, &[0.0], &[0.0], 0.5, &EhMaxSettings::default()).unwrap();
        assert!(sol.is_optimal());
        assert!(sol.objective.abs() < 1e-8);
    }

    #[test]
    fn larger_budget_never_lowers_inner_optimum() {
        let cfg = NetworkConfig::reference(3, 2, 1);
        let mut big = cfg.clone();
        big.p_b = 4.0;
        let mut cfg = cfg;
        cfg.p_b = 0.5;
        cfg.p_np = 1e-2;
        big.p_np = 1e-2;
        for seed in 0..3 {
            let ch = draw_channels(&cfg, 0.8, 0.1, seed).unwrap();
            let s = EhMaxSettings::default();
            let (a, _) = solve_inner(&cfg, &ch, &[0.5, 0.5], &[0.01, 0.01], 0.4, &s).unwrap();
            let (b, _) = solve_inner(&big, &ch, &[0.5, 0.5], &[0.01, 0.01], 0.4, &s).unwrap();
            if a.is_optimal() {
                assert!(b.is_optimal());
                assert!(b.objective >= a.objective - 1e-7);
            }
        }
    }

    fn bounded(cfg: &NetworkConfig, seed: u64) -> ChannelSet {
        draw_channels(cfg, 0.8, 0.1, seed)
            .unwrap()
            .with_uncertainty(UncertaintyModel::bounded_from_variances(cfg, 0.001, 0.0001).unwrap())
    }

    #[test]
    fn outer_loop_converges_and_certificate_holds() {
        let mut cfg = NetworkConfig::reference(3, 2, 1);
        cfg.p_np = 1e-2;
        cfg.p_b = 0.5;
        let ch = bounded(&cfg, 1);
        let s = settings(&[0.3, 0.6]);
        let res = solve_eh_max(&cfg, &ch, &s).unwrap();
        assert!(res.is_optimal());
        for p in &res.trace {
            if p.status == SolveStatus::Optimal {
                assert!(p.converged, "rho {} residual {}", p.rho, p.residual);
                assert!(p.outer_iterations <= 30);
                assert!(p.harvested <= p.harvested_nominal + 1e-9);
            }
        }
        let sol = res.solution.as_ref().unwrap();
        for (label, m) in &sol.margins {
            if label.starts_with("tau") {
                assert!(*m >= -1e-6, "{label}: {m}");
            }
        }
        let r = check_optimality_conditions(res.state.as_ref().unwrap(), &cfg.eh);
        assert!(r.iter().all(|x| x.abs() < 1e-6));
        let best = res
            .trace
            .iter()
            .filter(|p| p.harvested.is_finite())
            .map(|p| p.harvested)
            .fold(f64::MIN, f64::max);
        assert_eq!(res.harvested, best);
    }

    #[test]
    fn degenerate_grid_equals_single_point() {
        let mut cfg = NetworkConfig::reference(2, 2, 1);
        cfg.p_np = 1e-2;
        cfg.p_b = 0.5;
        let ch = draw_channels(&cfg, 0.8, 0.1, 3).unwrap();
        let s = settings(&[0.5]);
        let res = solve_eh_max(&cfg, &ch, &s).unwrap();
        let single = solve_grid_point(&cfg, &ch, 0.5, &s).unwrap();
        assert_eq!(res.harvested, single.point.harvested);
        assert_eq!(res.rho, 0.5);
    }

    #[test]
    fn finer_grid_dominates_nested_coarse_grid() {
        let mut cfg = NetworkConfig::reference(2, 2, 0);
        cfg.p_b = 0.5;
        let ch = draw_channels(&cfg, 0.8, 0.1, 5).unwrap();
        let coarse = solve_eh_max(&cfg, &ch, &settings(&rho_grid(0.2, 0.2, 0.8).unwrap())).unwrap();
        let fine = solve_eh_max(&cfg, &ch, &settings(&rho_grid(0.1, 0.1, 0.9).unwrap())).unwrap();
        assert!(fine.harvested >= coarse.harvested - 1e-9);
    }

    #[test]
    fn infeasible_grid_reports_statuses() {
        let mut cfg = NetworkConfig::reference(2, 1, 0);
        cfg.r_min = 30.0;
        cfg.p_b = 1e-3;
        let ch = draw_channels(&cfg, 0.8, 0.1, 1).unwrap();
        let res = solve_eh_max(&cfg, &ch, &settings(&[0.3, 0.7])).unwrap();
        assert!(!res.is_optimal());
        assert!(res.harvested.is_nan());
        assert_eq!(res.trace.len(), 2);
        assert!(res.trace.iter().all(|p| p.status != SolveStatus::Optimal));
    }

    #[test]
    fn oma_with_one_user_matches_noma() {
        let mut cfg = NetworkConfig::reference(2, 1, 0);
        cfg.p_b = 0.5;
        let ch = draw_channels(&cfg, 0.8, 0.1, 7).unwrap();
        let s = settings(&[0.5]);
        let a = solve_eh_max(&cfg, &ch, &s).unwrap();
        let b = solve_eh_max_oma(&cfg, &ch, &s).unwrap();
        assert!((a.harvested - b.harvested).abs() < 1e-12);
    }
}
