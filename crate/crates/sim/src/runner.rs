//! Monte Carlo trials over paired channel draws.

use std::time::Instant;

use rayon::prelude::*;
use swipt_core::conic::SolveStatus;
use swipt_core::eh_max::{solve_eh_max, solve_eh_max_oma, EhMaxSettings};
use swipt_core::extraction::{numerical_rank, verify_robust_feasibility, FixedDesign, VerificationReport};
use swipt_core::power_min::{default_settings, oma_slot_config, solve_power_min, solve_power_min_oma, BeamformingSolution};
use swipt_core::system_model::{draw_channels, trial_seed, ChannelSet, NetworkConfig};

use crate::config::{ConfigError, ExperimentConfig, Model, Objective, Scheme};
use crate::results::{aggregate, Aggregate};

/// Relative eigenvalue threshold for the reported rank.
pub const RANK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    NumericalFailure,
    /// The instance could not be set up (e.g. an unreachable harvesting target).
    Error,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::NumericalFailure => "numerical_failure",
            Status::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Status::Optimal, Status::Infeasible, Status::NumericalFailure, Status::Error]
            .into_iter()
            .find(|x| x.name() == s)
    }
}

impl From<SolveStatus> for Status {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => Status::Optimal,
            SolveStatus::Infeasible => Status::Infeasible,
            SolveStatus::NumericalFailure => Status::NumericalFailure,
        }
    }
}

/// One row of a results file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub model: Model,
    pub scheme: Scheme,
    pub status: Status,
    /// Transmit power (power minimisation) or total harvested power (EH maximisation).
    pub objective_w: f64,
    /// Power split; NaN for OMA, whose slots choose their own split.
    pub rho: f64,
    pub max_rank: usize,
    /// Smallest sampled constraint margin of the relaxed design.
    pub worst_margin: f64,
    /// Largest empirical violation rate over the constraints.
    pub outage_emp: f64,
    pub solve_ms: f64,
}

impl TrialRecord {
    pub fn feasible(&self) -> bool {
        self.status == Status::Optimal
    }
}

fn failed(trial: usize, model: Model, scheme: Scheme, status: Status, ms: f64) -> TrialRecord {
    TrialRecord {
        trial,
        model,
        scheme,
        status,
        objective_w: f64::NAN,
        rho: f64::NAN,
        max_rank: 0,
        worst_margin: f64::NAN,
        outage_emp: f64::NAN,
        solve_ms: ms,
    }
}

/// Channel draw of trial `t`.
pub fn trial_channels(cfg: &ExperimentConfig, t: usize) -> swipt_core::Result<ChannelSet> {
    draw_channels(
        &cfg.network,
        cfg.uncertainty.su_channel_var,
        cfg.uncertainty.pu_channel_var,
        trial_seed(cfg.seed, t as u64),
    )
}

struct Verified {
    max_rank: usize,
    worst: f64,
    outage: f64,
}

fn verify_slots(
    slots: &[(NetworkConfig, ChannelSet, BeamformingSolution)],
    samples: usize,
    tol: f64,
    seed: u64,
) -> swipt_core::Result<Verified> {
    let mut out = Verified {
        max_rank: 0,
        worst: f64::INFINITY,
        outage: 0.0,
    };
    for (i, (cfg, ch, sol)) in slots.iter().enumerate() {
        let rank = sol.w.iter().map(|w| numerical_rank(w, RANK_TOL)).max().unwrap_or(0);
        let report: VerificationReport = verify_robust_feasibility(
            cfg,
            ch,
            &FixedDesign::from_solution(sol),
            samples,
            tol,
            trial_seed(seed, i as u64),
        )?;
        out.max_rank = out.max_rank.max(rank);
        out.worst = out.worst.min(report.worst_margin());
        out.outage = out.outage.max(report.max_outage());
    }
    Ok(out)
}

/// Solve and verify one (trial, model, scheme) cell.
pub fn run_cell(
    cfg: &ExperimentConfig,
    base: &ChannelSet,
    trial: usize,
    model: Model,
    scheme: Scheme,
) -> TrialRecord {
    let start = Instant::now();
    let ms = |s: Instant| s.elapsed().as_secs_f64() * 1e3;
    let net = &cfg.network;
    let uncertainty = match cfg.uncertainty.model(net, model) {
        Ok(u) => u,
        Err(_) => return failed(trial, model, scheme, Status::Error, ms(start)),
    };
    let ch = base.clone().with_uncertainty(uncertainty);
    let vseed = trial_seed(trial_seed(cfg.seed, trial as u64), 1 + 2 * model as u64 + scheme as u64);
    let slot_cfg = oma_slot_config(net);
    let eh_settings = EhMaxSettings {
        rho_grid: cfg.rho_grid.clone(),
        ..EhMaxSettings::default()
    };

    // (status, objective, rho, solved slots)
    let outcome: swipt_core::Result<(Status, f64, f64, Vec<(NetworkConfig, ChannelSet, BeamformingSolution)>)> =
        (|| match (cfg.objective, scheme) {
            (Objective::PowerMin, Scheme::Noma) => {
                let sol = solve_power_min(net, &ch, &default_settings())?;
                let status = Status::from(sol.status);
                let (obj, rho) = (sol.objective, sol.rho);
                Ok((status, obj, rho, vec![(net.clone(), ch.clone(), sol)]))
            }
            (Objective::PowerMin, Scheme::Oma) => {
                let sol = solve_power_min_oma(net, &ch)?;
                let slots = sol
                    .slots
                    .into_iter()
                    .enumerate()
                    .map(|(k, s)| (slot_cfg.clone(), ch.single_user(k), s))
                    .collect();
                Ok((Status::from(sol.status), sol.total_power, f64::NAN, slots))
            }
            (Objective::EhMax, Scheme::Noma) => {
                let r = solve_eh_max(net, &ch, &eh_settings)?;
                let slots = r.solution.into_iter().map(|s| (net.clone(), ch.clone(), s)).collect();
                Ok((Status::from(r.status), r.harvested, r.rho, slots))
            }
            (Objective::EhMax, Scheme::Oma) => {
                let r = solve_eh_max_oma(net, &ch, &eh_settings)?;
                let slots = r
                    .slots
                    .into_iter()
                    .enumerate()
                    .filter_map(|(k, s)| s.solution.map(|sol| (slot_cfg.clone(), ch.single_user(k), sol)))
                    .collect();
                Ok((Status::from(r.status), r.harvested, f64::NAN, slots))
            }
        })();
    let (status, objective, rho, slots) = match outcome {
        Ok(o) => o,
        Err(_) => return failed(trial, model, scheme, Status::Error, ms(start)),
    };
    let solve_ms = ms(start);
    if status != Status::Optimal {
        return failed(trial, model, scheme, status, solve_ms);
    }
    match verify_slots(&slots, cfg.verify_samples, cfg.verify_tol, vseed) {
        Ok(v) => TrialRecord {
            trial,
            model,
            scheme,
            status,
            objective_w: objective,
            rho,
            max_rank: v.max_rank,
            worst_margin: v.worst,
            outage_emp: v.outage,
            solve_ms,
        },
        Err(_) => failed(trial, model, scheme, Status::Error, solve_ms),
    }
}

/// All records of one trial, in model-then-scheme order.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Vec<TrialRecord> {
    let base = match trial_channels(cfg, trial) {
        Ok(b) => b,
        Err(_) => {
            return cfg
                .models
                .iter()
                .flat_map(|&m| cfg.schemes.iter().map(move |&s| failed(trial, m, s, Status::Error, 0.0)))
                .collect()
        }
    };
    cfg.models
        .iter()
        .flat_map(|&m| cfg.schemes.iter().map(move |&s| (m, s)))
        .map(|(m, s)| run_cell(cfg, &base, trial, m, s))
        .collect()
}

/// Run every trial on a pool of `cfg.jobs` workers; records come back in trial order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build()?;
    Ok(pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, t))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }))
}

/// Run the experiment once per sweep value on the same channel draws.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    parameter: &str,
    values: &[f64],
) -> Result<(Vec<(f64, TrialRecord)>, Vec<Aggregate>), SweepError> {
    let mut rows = Vec::new();
    let mut aggregates = Vec::new();
    for &v in values {
        let point = cfg.with_parameter(parameter, v)?;
        let recs = run_experiment(&point)?;
        aggregates.extend(aggregate(v, &recs));
        rows.extend(recs.into_iter().map(|r| (v, r)));
    }
    Ok((rows, aggregates))
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pool(#[from] rayon::ThreadPoolBuildError),
}
