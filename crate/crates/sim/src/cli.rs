//! Command-line front end. Exit codes: 0 success, 1 runtime failure, 2 configuration error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::complexity::complexity_estimate;
use crate::config::{parse_rho_grid, ConfigError, ExperimentConfig, Model, Objective, Scheme};
use crate::plot::{cdf_plot, sweep_plot};
use crate::results::{
    cdf_by_series, read_records, series, write_aggregates, write_cdf, write_records, write_sweep_trials,
};
use crate::runner::{run_experiment, run_sweep, SweepError, TrialRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "swipt", version, about = "Robust NOMA/SWIPT beamforming experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimise transmit power over Monte Carlo channel draws.
    PowerMin(RunArgs),
    /// Maximise harvested power over Monte Carlo channel draws.
    EhMax(RunArgs),
    /// Solve, then check the designs against sampled channel errors.
    Verify(RunArgs),
    /// Repeat an experiment for each value of one parameter and aggregate.
    Sweep(SweepArgs),
    /// Empirical CDF of one column of a results file.
    Cdf(CdfArgs),
    /// Interior-point flop-count proxies.
    Complexity(ComplexityArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration; the desk profile is used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Repeat to select several models.
    #[arg(long, value_enum)]
    pub model: Vec<Model>,
    /// Repeat to select several schemes.
    #[arg(long, value_enum)]
    pub scheme: Vec<Scheme>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Power-split grid as `start:step:end`.
    #[arg(long, value_name = "START:STEP:END")]
    pub rho_grid: Option<String>,
    /// Worker threads (0: one per core).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Overrides the `[sweep]` parameter.
    #[arg(long)]
    pub parameter: Option<String>,
    /// Comma-separated values; overrides the `[sweep]` values.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Optimisation objective (defaults to the configured one).
    #[arg(long, value_parser = ["power_min", "eh_max"])]
    pub objective: Option<String>,
    /// Also write an SVG of the means.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CdfArgs {
    /// Results file written by `power-min`, `eh-max` or `verify`.
    pub input: PathBuf,
    #[arg(long, default_value = "objective_w")]
    pub column: String,
    /// CDF table; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    /// Take M, K and N from this configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Target accuracy of the interior-point method.
    #[arg(long, default_value_t = 1e-7)]
    pub tau: f64,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Config(c) => c.into(),
            SweepError::Pool(p) => Failure::Runtime(p.to_string()),
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_CONFIG;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(code) => code,
        Err(Failure::Config(m)) => {
            let _ = writeln!(stderr, "config error: {m}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            EXIT_RUNTIME
        }
    }
}

fn load(args: &RunArgs, objective: Option<Objective>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => ExperimentConfig::desk(),
    };
    if let Some(o) = objective {
        cfg.objective = o;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if !args.model.is_empty() {
        cfg.models = args.model.clone();
    }
    if !args.scheme.is_empty() {
        cfg.schemes = args.scheme.clone();
    }
    if let Some(o) = &args.out {
        cfg.output = o.clone();
    }
    if let Some(g) = &args.rho_grid {
        cfg.rho_grid = parse_rho_grid(g).map_err(|m| Failure::Config(format!("--rho-grid: {m}")))?;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn summarize(out: &mut dyn Write, records: &[TrialRecord]) -> Result<(), Failure> {
    for ((m, s), rows) in series(records) {
        let vals: Vec<f64> = rows.iter().filter(|r| r.feasible()).map(|r| r.objective_w).collect();
        let (mean, std) = crate::results::mean_std(&vals);
        writeln!(
            out,
            "{:<8} {:<4} feasible {}/{}  mean {:.6e} W  std {:.3e}",
            m.name(),
            s.name(),
            vals.len(),
            rows.len(),
            mean,
            std
        )
        .map_err(runtime)?;
    }
    Ok(())
}

fn write_results(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Result<(), Failure> {
    let mut f = create(&cfg.output)?;
    write_records(&mut f, records).map_err(runtime)?;
    f.flush().map_err(runtime)
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, Failure> {
    match cmd {
        Command::PowerMin(a) => experiment(&a, Some(Objective::PowerMin), out),
        Command::EhMax(a) => experiment(&a, Some(Objective::EhMax), out),
        Command::Verify(a) => verify(&a, out),
        Command::Sweep(a) => sweep(&a, out),
        Command::Cdf(a) => cdf(&a, out),
        Command::Complexity(a) => complexity(&a, out),
    }
}

fn experiment(a: &RunArgs, objective: Option<Objective>, out: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = load(a, objective)?;
    let records = run_experiment(&cfg).map_err(runtime)?;
    write_results(&cfg, &records)?;
    summarize(out, &records)?;
    writeln!(out, "wrote {} rows to {}", records.len(), cfg.output.display()).map_err(runtime)?;
    Ok(EXIT_OK)
}

/// Bounded and perfect designs must have no sampled violation beyond the
/// tolerance; Gaussian designs must keep every empirical outage below its
/// tolerance plus three binomial standard errors.
pub fn verification_passes(cfg: &ExperimentConfig, r: &TrialRecord) -> bool {
    if !r.feasible() {
        return true;
    }
    match r.model {
        Model::Perfect | Model::Bounded => r.worst_margin >= -cfg.verify_tol,
        Model::Gaussian => {
            let xi = cfg.network.xi_k.max(cfg.network.xi_ks).max(cfg.network.xi_np);
            let se = (xi * (1.0 - xi) / cfg.verify_samples as f64).sqrt();
            r.outage_emp <= xi + 3.0 * se
        }
    }
}

fn verify(a: &RunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = load(a, None)?;
    let records = run_experiment(&cfg).map_err(runtime)?;
    write_results(&cfg, &records)?;
    summarize(out, &records)?;
    let bad: Vec<&TrialRecord> = records.iter().filter(|r| !verification_passes(&cfg, r)).collect();
    for r in &bad {
        writeln!(
            out,
            "FAIL trial {} {} {}: worst margin {:.3e}, outage {:.4}",
            r.trial,
            r.model.name(),
            r.scheme.name(),
            r.worst_margin,
            r.outage_emp
        )
        .map_err(runtime)?;
    }
    let checked = records.iter().filter(|r| r.feasible()).count();
    writeln!(
        out,
        "verified {checked} designs with {} samples each: {} failed",
        cfg.verify_samples,
        bad.len()
    )
    .map_err(runtime)?;
    Ok(if bad.is_empty() { EXIT_OK } else { EXIT_RUNTIME })
}

fn sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let objective = match a.objective.as_deref() {
        Some("eh_max") => Some(Objective::EhMax),
        Some(_) => Some(Objective::PowerMin),
        None => None,
    };
    let mut cfg = load(&a.run, objective)?;
    if let Some(p) = &a.parameter {
        let values = if a.values.is_empty() {
            cfg.sweep.as_ref().map(|s| s.values.clone()).unwrap_or_default()
        } else {
            a.values.clone()
        };
        cfg.sweep = Some(crate::config::Sweep {
            parameter: p.clone(),
            values,
        });
    } else if !a.values.is_empty() {
        match cfg.sweep.as_mut() {
            Some(s) => s.values = a.values.clone(),
            None => return Err(Failure::Config("--values needs a sweep parameter".into())),
        }
    }
    cfg.validate()?;
    let Some(sw) = cfg.sweep.clone() else {
        return Err(Failure::Config("no sweep given: add a [sweep] table or --parameter".into()));
    };
    let (rows, aggregates) = run_sweep(&cfg, &sw.parameter, &sw.values)?;
    let mut f = create(&cfg.output)?;
    write_aggregates(&mut f, &sw.parameter, &aggregates).map_err(runtime)?;
    f.flush().map_err(runtime)?;
    let trials_path = sibling(&cfg.output, "trials");
    let mut t = create(&trials_path)?;
    write_sweep_trials(&mut t, &rows).map_err(runtime)?;
    t.flush().map_err(runtime)?;
    for g in &aggregates {
        writeln!(
            out,
            "{} = {:<10} {:<8} {:<4} feasible {}/{}  mean {:.6e}  std {:.3e}",
            sw.parameter,
            g.value,
            g.model.name(),
            g.scheme.name(),
            g.feasible,
            g.trials,
            g.mean,
            g.std
        )
        .map_err(runtime)?;
    }
    if let Some(p) = &a.plot {
        sweep_plot(p, &sw.parameter, &aggregates).map_err(runtime)?;
    }
    writeln!(out, "wrote {} and {}", cfg.output.display(), trials_path.display()).map_err(runtime)?;
    Ok(EXIT_OK)
}

/// `dir/name.csv` -> `dir/name.<tag>.csv`
pub fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}.{tag}.{ext}"))
}

fn cdf(a: &CdfArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let f = File::open(&a.input).map_err(|e| Failure::Runtime(format!("{}: {e}", a.input.display())))?;
    let records = read_records(f).map_err(runtime)?;
    let cdfs = cdf_by_series(&records, &a.column).map_err(|e| Failure::Config(e.to_string()))?;
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            write_cdf(&mut w, &cdfs).map_err(runtime)?;
            w.flush().map_err(runtime)?;
        }
        None => write_cdf(&mut *out, &cdfs).map_err(runtime)?,
    }
    if let Some(p) = &a.plot {
        cdf_plot(p, &a.column, &cdfs).map_err(runtime)?;
    }
    Ok(EXIT_OK)
}

fn complexity(a: &ComplexityArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let base = match &a.config {
        Some(p) => {
            ExperimentConfig::load(p)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
                .network
        }
        None => ExperimentConfig::desk().network,
    };
    let (m, k, n) = (a.m.unwrap_or(base.m), a.k.unwrap_or(base.k), a.n.unwrap_or(base.n));
    let c = complexity_estimate(m, k, n, a.tau).map_err(Failure::Config)?;
    writeln!(out, "M={m} K={k} N={n} tau={:e}", a.tau).map_err(runtime)?;
    writeln!(out, "n                    {}", c.n).map_err(runtime)?;
    writeln!(out, "psi1                 {}", c.psi1).map_err(runtime)?;
    writeln!(out, "psi2                 {}", c.psi2).map_err(runtime)?;
    writeln!(out, "bounded_flops_proxy  {:.6e}", c.bounded_flops_proxy).map_err(runtime)?;
    writeln!(out, "gaussian_flops_proxy {:.6e}", c.gaussian_flops_proxy).map_err(runtime)?;
    Ok(EXIT_OK)
}
