//! Transmit-power minimisation: robust NOMA beamforming with power splitting,
//! and the OMA (one user per slot) baseline.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::conic::{solve, AffineScalar, ConicProblem, ConicSolution, SolveStatus, SolverSettings};
use crate::eh_model::required_input_threshold;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::robust::{
    add_eh_constraints, add_interference_constraints, add_rate_constraints, DesignVars, Split,
};
use crate::system_model::{ChannelSet, NetworkConfig, UncertaintyModel};

/// Solver settings used by the power-minimisation drivers.
pub fn default_settings() -> SolverSettings {
    SolverSettings {
        tol_feas: 1e-9,
        tol_gap: 1e-9,
        ..SolverSettings::default()
    }
}

/// Solved (or failed) beamforming design. Matrices are indexed by the sorted SU order of the channel set.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution {
    pub status: SolveStatus,
    pub w: Vec<CMat>,
    pub v: CMat,
    pub rho: f64,
    pub p: f64,
    pub q: f64,
    /// Named multipliers and auxiliary scalars.
    pub slacks: Vec<(String, f64)>,
    /// Transmit power in watts (NaN unless optimal).
    pub objective: f64,
    /// Per-constraint margins at the returned point.
    pub margins: Vec<(String, f64)>,
    pub iterations: usize,
    pub diagnostic: String,
}

impl BeamformingSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn total_power(&self) -> f64 {
        self.w.iter().map(crate::linalg::trace_re).sum::<f64>() + crate::linalg::trace_re(&self.v)
    }

    pub fn worst_margin(&self) -> f64 {
        self.margins
            .iter()
            .map(|m| m.1)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest gap between the auxiliaries and the quantities they stand for.
    pub fn split_slack(&self) -> f64 {
        let dp = self.p - 1.0 / (1.0 - self.rho);
        let dq = self.q - 1.0 / self.rho;
        dp.abs().max(dq.abs())
    }

    pub(crate) fn from_solution(
        prob: &ConicProblem,
        vars: &DesignVars,
        sol: &ConicSolution,
    ) -> Self {
        let m = vars.m();
        let w: Vec<CMat> = vars.w.iter().map(|&v| sol.matrix(v)).collect();
        let v = vars.v.map_or_else(|| CMat::zeros(m, m), |v| sol.matrix(v));
        let (rho, p, q) = match vars.split {
            Split::Variable { rho, p, q } => (sol.scalar(rho), sol.scalar(p), sol.scalar(q)),
            Split::Fixed(rho) => (rho, 1.0 / (1.0 - rho), 1.0 / rho),
        };
        let slacks = prob
            .vars
            .iter()
            .filter(|d| matches!(d.kind, crate::conic::VarKind::Scalar { .. }))
            .map(|d| (d.name.clone(), sol.x[d.offset]))
            .collect();
        Self {
            status: sol.status,
            w,
            v,
            rho,
            p,
            q,
            slacks,
            objective: sol.objective,
            margins: prob.margins(&sol.x),
            iterations: sol.iterations,
            diagnostic: sol.diagnostic.clone(),
        }
    }
}

pub(crate) fn check_inputs(cfg: &NetworkConfig, ch: &ChannelSet) -> Result<()> {
    cfg.validate()?;
    ch.uncertainty.validate(cfg)?;
    if ch.num_su() != cfg.k {
        return Err(Error::Dimension {
            expected: cfg.k,
            got: ch.num_su(),
        });
    }
    if ch.antennas() != cfg.m {
        return Err(Error::Dimension {
            expected: cfg.m,
            got: ch.antennas(),
        });
    }
    Ok(())
}

/// Build the power-minimisation problem for the channel set's uncertainty model.
pub fn build_power_min(cfg: &NetworkConfig, ch: &ChannelSet) -> Result<(ConicProblem, DesignVars)> {
    check_inputs(cfg, ch)?;
    let mut prob = ConicProblem::minimize();
    let vars = DesignVars::declare(&mut prob, cfg, None)?;
    let power = vars.total_power();
    prob.set_objective(power.clone());
    add_rate_constraints(&mut prob, ch, cfg, &vars)?;
    add_interference_constraints(&mut prob, ch, cfg, &vars)?;
    let d = required_input_threshold(cfg.p_ks, &cfg.eh)?;
    add_eh_constraints(&mut prob, ch, cfg, &vars, d)?;
    prob.add_nonneg(
        "power budget",
        AffineScalar::constant(cfg.p_b).add(&power.scale(-1.0)),
    );
    Ok((prob, vars))
}

/// Solve for whatever uncertainty model the channel set carries.
pub fn solve_power_min(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
    settings: &SolverSettings,
) -> Result<BeamformingSolution> {
    let (prob, vars) = build_power_min(cfg, ch)?;
    let sol = solve(&prob, settings);
    Ok(BeamformingSolution::from_solution(&prob, &vars, &sol))
}

/// Worst-case design over bounded error balls.
pub fn solve_power_min_bounded(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
) -> Result<BeamformingSolution> {
    if !matches!(ch.uncertainty, UncertaintyModel::Bounded { .. }) {
        return Err(Error::Model("bounded uncertainty required"));
    }
    solve_power_min(cfg, ch, &default_settings())
}

/// Outage-constrained design for Gaussian errors.
pub fn solve_power_min_gaussian(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
) -> Result<BeamformingSolution> {
    if !matches!(ch.uncertainty, UncertaintyModel::Gaussian { .. }) {
        return Err(Error::Model("gaussian uncertainty required"));
    }
    solve_power_min(cfg, ch, &default_settings())
}

/// Design against the estimated channels only.
pub fn solve_power_min_perfect(
    cfg: &NetworkConfig,
    ch: &ChannelSet,
) -> Result<BeamformingSolution> {
    if !matches!(ch.uncertainty, UncertaintyModel::Perfect) {
        return Err(Error::Model("perfect CSI required"));
    }
    solve_power_min(cfg, ch, &default_settings())
}

/// Per-slot solutions of the orthogonal baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct OmaSolution {
    pub slots: Vec<BeamformingSolution>,
    /// Sum of slot powers (NaN when any slot failed).
    pub total_power: f64,
    pub status: SolveStatus,
    /// First slot that was not solved to optimality.
    pub failed_slot: Option<usize>,
}

/// Single-user configuration for one OMA slot: rate target scaled by `K`.
pub fn oma_slot_config(cfg: &NetworkConfig) -> NetworkConfig {
    let mut slot = cfg.clone();
    slot.k = 1;
    slot.r_min = cfg.r_min * cfg.k as f64;
    slot
}

/// Serve one SU per slot; each slot has its own `P_B` cap.
pub fn solve_power_min_oma(cfg: &NetworkConfig, ch: &ChannelSet) -> Result<OmaSolution> {
    let slot_cfg = oma_slot_config(cfg);
    let mut slots = Vec::with_capacity(cfg.k);
    let mut failed_slot = None;
    let mut status = SolveStatus::Optimal;
    for k in 0..cfg.k {
        let sol = solve_power_min(&slot_cfg, &ch.single_user(k), &default_settings())?;
        if !sol.is_optimal() && failed_slot.is_none() {
            failed_slot = Some(k);
            status = sol.status;
        }
        slots.push(sol);
    }
    let total_power = if failed_slot.is_none() {
        slots.iter().map(|s| s.objective).sum()
    } else {
        f64::NAN
    };
    Ok(OmaSolution {
        slots,
        total_power,
        status,
        failed_slot,
    })
}

/// Human-readable summary of a failed solve.
pub fn failure_summary(sol: &BeamformingSolution) -> String {
    format!(
        "{:?} after {} iterations: {}",
        sol.status, sol.iterations, sol.diagnostic
    )
}
