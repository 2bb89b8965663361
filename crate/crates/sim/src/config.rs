//! TOML experiment configuration. Powers carry their unit in the key name
//! (`_w` or `_dbm`); everything is converted to Watts on load. See
//! `docs/config.md` for the schema.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use swipt_core::eh_max::rho_grid;
use swipt_core::eh_model::EhParams;
use swipt_core::system_model::{dbm_to_watts, NetworkConfig, UncertaintyModel};

/// Configuration problem with the offending line when it can be located.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl ConfigError {
    fn new(line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Perfect,
    Bounded,
    Gaussian,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Perfect => "perfect",
            Model::Bounded => "bounded",
            Model::Gaussian => "gaussian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Noma,
    Oma,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Noma => "noma",
            Scheme::Oma => "oma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    PowerMin,
    EhMax,
}

/// Channel statistics and CSI-error variances.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySpec {
    /// Variance of the estimated SU channel entries.
    pub su_channel_var: f64,
    /// Variance of the estimated PU channel entries.
    pub pu_channel_var: f64,
    pub su_error_var: f64,
    pub pu_error_var: f64,
}

impl UncertaintySpec {
    /// Error model for `model`; bounded radii are matched to the Gaussian variances.
    pub fn model(&self, cfg: &NetworkConfig, model: Model) -> swipt_core::Result<UncertaintyModel> {
        Ok(match model {
            Model::Perfect => UncertaintyModel::Perfect,
            Model::Gaussian => UncertaintyModel::gaussian_isotropic(cfg, self.su_error_var, self.pu_error_var),
            Model::Bounded => UncertaintyModel::bounded_from_variances(cfg, self.su_error_var, self.pu_error_var)?,
        })
    }
}

/// Parameters that a sweep may vary.
pub const SWEEP_PARAMETERS: &[&str] = &[
    "antennas",
    "secondary_users",
    "primary_users",
    "r_min_bps_hz",
    "gamma_min",
    "p_np_dbm",
    "p_np_w",
    "p_b_w",
    "p_ks_w",
    "su_error_var",
    "pu_error_var",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub uncertainty: UncertaintySpec,
    pub schemes: Vec<Scheme>,
    pub models: Vec<Model>,
    pub objective: Objective,
    pub trials: usize,
    pub seed: u64,
    pub sweep: Option<Sweep>,
    pub rho_grid: Vec<f64>,
    pub output: PathBuf,
    /// Error draws per constraint when verifying a design.
    pub verify_samples: usize,
    pub verify_tol: f64,
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
}

impl ExperimentConfig {
    /// Desk profile: 4 antennas, 2 SUs, 1 PU, 50 trials.
    pub fn desk() -> Self {
        Self {
            network: NetworkConfig::reference(4, 2, 1),
            uncertainty: UncertaintySpec {
                su_channel_var: 0.8,
                pu_channel_var: 0.1,
                su_error_var: 0.001,
                pu_error_var: 1e-6,
            },
            schemes: vec![Scheme::Noma],
            models: vec![Model::Perfect, Model::Bounded, Model::Gaussian],
            objective: Objective::PowerMin,
            trials: 50,
            seed: 1,
            sweep: None,
            rho_grid: rho_grid(0.1, 0.2, 0.9).expect("static grid"),
            output: PathBuf::from("results.csv"),
            verify_samples: 1000,
            verify_tol: 1e-6,
            jobs: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(None, format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&src)
    }

    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(src, s.start));
            ConfigError::new(line, e.message().trim().to_string())
        })?;
        raw.resolve(src)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::new(None, "trials must be at least 1"));
        }
        if self.models.is_empty() || self.schemes.is_empty() {
            return Err(ConfigError::new(None, "models and schemes must not be empty"));
        }
        self.network
            .validate()
            .map_err(|e| ConfigError::new(None, e.to_string()))?;
        if let Some(s) = &self.sweep {
            check_sweep(s).map_err(|m| ConfigError::new(None, m))?;
        }
        Ok(())
    }

    /// Copy with one sweep parameter set to `value`.
    pub fn with_parameter(&self, parameter: &str, value: f64) -> Result<Self, ConfigError> {
        let mut out = self.clone();
        let count = || -> Result<usize, ConfigError> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else if value == 0.0 && parameter == "primary_users" {
                Ok(0)
            } else {
                Err(ConfigError::new(None, format!("{parameter} must be a positive integer, got {value}")))
            }
        };
        let net = &mut out.network;
        match parameter {
            "antennas" => net.m = count()?,
            "secondary_users" => net.k = count()?,
            "primary_users" => net.n = count()?,
            "r_min_bps_hz" => net.r_min = value,
            "gamma_min" => net.r_min = (1.0 + value).log2(),
            "p_np_dbm" => net.p_np = dbm_to_watts(value),
            "p_np_w" => net.p_np = value,
            "p_b_w" => net.p_b = value,
            "p_ks_w" => net.p_ks = value,
            "su_error_var" => out.uncertainty.su_error_var = value,
            "pu_error_var" => out.uncertainty.pu_error_var = value,
            other => return Err(ConfigError::new(None, format!("unknown sweep parameter `{other}`"))),
        }
        out.network.validate().map_err(|e| ConfigError::new(None, e.to_string()))?;
        Ok(out)
    }
}

fn check_sweep(s: &Sweep) -> Result<(), String> {
    if !SWEEP_PARAMETERS.contains(&s.parameter.as_str()) {
        return Err(format!(
            "unknown sweep parameter `{}` (expected one of {})",
            s.parameter,
            SWEEP_PARAMETERS.join(", ")
        ));
    }
    if s.values.is_empty() {
        return Err("sweep values must not be empty".into());
    }
    Ok(())
}

/// Parse `start:step:end`.
pub fn parse_rho_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(format!("expected start:step:end, got `{s}`"));
    };
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    rho_grid(num(a)?, num(b)?, num(c)?).map_err(|e| e.to_string())
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// First line assigning `key` (optionally inside `[table]`).
fn line_of_key(src: &str, table: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('[') {
            current = Some(rest.trim_end_matches(']').trim().to_string());
            continue;
        }
        let in_table = match table {
            None => current.is_none(),
            Some(name) => current.as_deref() == Some(name),
        };
        if in_table {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    objective: Option<Objective>,
    trials: Option<i64>,
    seed: Option<u64>,
    models: Option<Vec<Model>>,
    schemes: Option<Vec<Scheme>>,
    output: Option<PathBuf>,
    rho_grid: Option<String>,
    jobs: Option<usize>,
    #[serde(default)]
    network: RawNetwork,
    #[serde(default)]
    channels: RawChannels,
    sweep: Option<RawSweep>,
    #[serde(default)]
    verify: RawVerify,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    antennas: Option<usize>,
    secondary_users: Option<usize>,
    primary_users: Option<usize>,
    sigma_s_sq_w: Option<f64>,
    sigma_s_sq_dbm: Option<f64>,
    sigma_d_sq_w: Option<f64>,
    sigma_d_sq_dbm: Option<f64>,
    r_min_bps_hz: Option<f64>,
    gamma_min: Option<f64>,
    p_ks_w: Option<f64>,
    p_ks_dbm: Option<f64>,
    p_np_w: Option<f64>,
    p_np_dbm: Option<f64>,
    p_b_w: Option<f64>,
    p_b_dbm: Option<f64>,
    outage: Option<f64>,
    energy_beam: Option<bool>,
    #[serde(default)]
    eh: RawEh,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEh {
    saturation_w: Option<f64>,
    a: Option<f64>,
    b_w: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannels {
    su_channel_var: Option<f64>,
    pu_channel_var: Option<f64>,
    su_error_var: Option<f64>,
    pu_error_var: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: String,
    values: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    samples: Option<usize>,
    tol: Option<f64>,
}

fn power(
    src: &str,
    table: &str,
    key: &str,
    w: Option<f64>,
    dbm: Option<f64>,
    default: f64,
) -> Result<f64, ConfigError> {
    match (w, dbm) {
        (Some(_), Some(_)) => Err(ConfigError::new(
            line_of_key(src, Some(table), &format!("{key}_dbm")),
            format!("give either {key}_w or {key}_dbm, not both"),
        )),
        (Some(w), None) => Ok(w),
        (None, Some(d)) => Ok(dbm_to_watts(d)),
        (None, None) => Ok(default),
    }
}

impl RawConfig {
    fn resolve(self, src: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = ExperimentConfig::desk();
        let at = |table: Option<&str>, key: &str, msg: String| ConfigError::new(line_of_key(src, table, key), msg);
        if let Some(o) = self.objective {
            cfg.objective = o;
        }
        if let Some(t) = self.trials {
            if t < 1 {
                return Err(at(None, "trials", format!("trials must be at least 1, got {t}")));
            }
            cfg.trials = t as usize;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.models {
            if m.is_empty() {
                return Err(at(None, "models", "models must not be empty".into()));
            }
            cfg.models = dedup(m);
        }
        if let Some(s) = self.schemes {
            if s.is_empty() {
                return Err(at(None, "schemes", "schemes must not be empty".into()));
            }
            cfg.schemes = dedup(s);
        }
        if let Some(o) = self.output {
            cfg.output = o;
        }
        if let Some(g) = self.rho_grid {
            cfg.rho_grid = parse_rho_grid(&g).map_err(|m| at(None, "rho_grid", m))?;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }

        let n = self.network;
        let net = &mut cfg.network;
        let dims = [
            ("antennas", n.antennas, &mut net.m),
            ("secondary_users", n.secondary_users, &mut net.k),
            ("primary_users", n.primary_users, &mut net.n),
        ];
        for (key, value, slot) in dims {
            if let Some(v) = value {
                if v == 0 && key != "primary_users" {
                    return Err(at(Some("network"), key, format!("{key} must be at least 1")));
                }
                *slot = v;
            }
        }
        net.sigma_s_sq = power(src, "network", "sigma_s_sq", n.sigma_s_sq_w, n.sigma_s_sq_dbm, net.sigma_s_sq)?;
        net.sigma_d_sq = power(src, "network", "sigma_d_sq", n.sigma_d_sq_w, n.sigma_d_sq_dbm, net.sigma_d_sq)?;
        net.p_ks = power(src, "network", "p_ks", n.p_ks_w, n.p_ks_dbm, net.p_ks)?;
        net.p_np = power(src, "network", "p_np", n.p_np_w, n.p_np_dbm, net.p_np)?;
        net.p_b = power(src, "network", "p_b", n.p_b_w, n.p_b_dbm, net.p_b)?;
        match (n.r_min_bps_hz, n.gamma_min) {
            (Some(_), Some(_)) => {
                return Err(at(
                    Some("network"),
                    "gamma_min",
                    "give either r_min_bps_hz or gamma_min, not both".into(),
                ))
            }
            (Some(r), None) => net.r_min = r,
            (None, Some(g)) => net.r_min = (1.0 + g).log2(),
            (None, None) => {}
        }
        if let Some(xi) = n.outage {
            net.xi_k = xi;
            net.xi_ks = xi;
            net.xi_np = xi;
        }
        if let Some(b) = n.energy_beam {
            net.energy_beam = b;
        }
        let eh = EhParams::new(
            n.eh.saturation_w.unwrap_or(net.eh.saturation()),
            n.eh.a.unwrap_or(net.eh.slope()),
            n.eh.b_w.unwrap_or(net.eh.turn_on()),
        )
        .map_err(|e| at(Some("network.eh"), "saturation_w", e.to_string()))?;
        net.eh = eh;
        net.validate().map_err(|e| {
            let key = match &e {
                swipt_core::Error::Domain { name, .. } => name.to_string(),
                _ => String::new(),
            };
            let line = SUFFIXES
                .iter()
                .find_map(|s| line_of_key(src, Some("network"), &format!("{key}{s}")));
            ConfigError::new(line, e.to_string())
        })?;

        let c = self.channels;
        let u = &mut cfg.uncertainty;
        for (key, value, slot) in [
            ("su_channel_var", c.su_channel_var, &mut u.su_channel_var),
            ("pu_channel_var", c.pu_channel_var, &mut u.pu_channel_var),
            ("su_error_var", c.su_error_var, &mut u.su_error_var),
            ("pu_error_var", c.pu_error_var, &mut u.pu_error_var),
        ] {
            if let Some(v) = value {
                let positive = key.ends_with("channel_var");
                if !v.is_finite() || v < 0.0 || (positive && v == 0.0) {
                    return Err(at(Some("channels"), key, format!("{key} out of range: {v}")));
                }
                *slot = v;
            }
        }

        if let Some(s) = self.sweep {
            let sweep = Sweep {
                parameter: s.parameter,
                values: s.values,
            };
            check_sweep(&sweep).map_err(|m| at(Some("sweep"), "parameter", m))?;
            cfg.sweep = Some(sweep);
        }
        if let Some(s) = self.verify.samples {
            if s == 0 {
                return Err(at(Some("verify"), "samples", "samples must be at least 1".into()));
            }
            cfg.verify_samples = s;
        }
        if let Some(t) = self.verify.tol {
            if !(t >= 0.0) {
                return Err(at(Some("verify"), "tol", format!("tol must be non-negative, got {t}")));
            }
            cfg.verify_tol = t;
        }
        Ok(cfg)
    }
}

const SUFFIXES: &[&str] = &["", "_w", "_dbm", "_bps_hz"];

fn dedup<T: Ord + Copy>(mut v: Vec<T>) -> Vec<T> {
    let mut seen = Vec::with_capacity(v.len());
    v.retain(|x| {
        if seen.contains(x) {
            false
        } else {
            seen.push(*x);
            true
        }
    });
    v
}
