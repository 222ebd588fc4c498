//! Command-line front end.
//!
//! Settings come from flags, then from a flat TOML file given with
//! `--config` whose keys are the [`RunSpec`] field names, then from
//! defaults. Every command writes into its output directory only, finishing
//! with a `manifest.json` that records the resolved spec and seeds. Failures
//! print `{"error": {...}}` on stderr and exit nonzero.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::arrivals_poisson::simulate_marked_poisson;
use crate::distributions::{derive_seed, SeedSpec, ServiceModel};
use crate::error::{invalid, Error};
use crate::limit_process::{simulate_limit_free, LimitSpec};
use crate::paths::{fmt_f64, Reflection};
use crate::queue_sim::{simulate_queue, QueueSpec};
use crate::scaling::{rescale, ScalingConstants};
use crate::stats::{
    busy_period_comparison, drift_convergence_report, excursion_summary, idle_time_report,
    queue_limit_comparison, ComparisonConfig, ConvergenceReport, DriftConfig,
};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const OUTPUT_ROOT_ENV: &str = "STABLEQUEUE_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "stablequeue",
    version,
    about = "Transitory queue with heavy-tailed service times"
)]
pub struct Cli {
    /// Flat TOML file with RunSpec keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Bound on parallel replications (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one queue and export its paths.
    Simulate(SpecArgs),
    /// Sample paths of the limit process.
    Limit(SpecArgs),
    /// Convergence of the repeated-marks drift.
    DriftCheck(SpecArgs),
    /// KS distance of scaled queue marginals to the reflected limit.
    Converge(SpecArgs),
    /// First busy periods of the scaled queue and the limit.
    BusyPeriod(SpecArgs),
    /// Excursions of the reflected limit above zero.
    Excursions(SpecArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Limit(_) => "limit",
            Command::DriftCheck(_) => "drift-check",
            Command::Converge(_) => "converge",
            Command::BusyPeriod(_) => "busy-period",
            Command::Excursions(_) => "excursions",
        }
    }

    fn args(&self) -> &SpecArgs {
        match self {
            Command::Simulate(a)
            | Command::Limit(a)
            | Command::DriftCheck(a)
            | Command::Converge(a)
            | Command::BusyPeriod(a)
            | Command::Excursions(a) => a,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SpecArgs {
    /// Population size(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
    /// Tail exponent(s) in (1, 2], comma separated.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    #[arg(long = "x-m")]
    pub x_m: Option<f64>,
    #[arg(long)]
    pub ell1: Option<f64>,
    #[arg(long)]
    pub q0: Option<f64>,
    /// Scaled horizon.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long = "limit-reps")]
    pub limit_reps: Option<usize>,
    #[arg(long = "seed")]
    pub master_seed: Option<u64>,
    /// Replication index used by `simulate`.
    #[arg(long)]
    pub rep: Option<u64>,
    /// Grid points of rescaled path exports.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Grid step of the limit process.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long = "s-alpha")]
    pub s_alpha: Option<f64>,
    #[arg(long = "unit-scale")]
    pub unit_scale: Option<f64>,
    /// Scaled checkpoint times, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<f64>>,
    /// Extra samples per idle interval of the exported free process.
    #[arg(long = "idle-refinement")]
    pub idle_refinement: Option<usize>,
    /// Output directory (default: $STABLEQUEUE_OUT/<command>).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Either one value or a list, for config-file keys that accept both.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> From<OneOrMany<T>> for Vec<T> {
    fn from(v: OneOrMany<T>) -> Self {
        match v {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(xs) => xs,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<OneOrMany<u64>>,
    alpha: Option<OneOrMany<f64>>,
    x_m: Option<f64>,
    ell1: Option<f64>,
    q0: Option<f64>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    reps: Option<usize>,
    limit_reps: Option<usize>,
    master_seed: Option<u64>,
    rep: Option<u64>,
    grid: Option<usize>,
    dt: Option<f64>,
    lambda: Option<f64>,
    s_alpha: Option<f64>,
    unit_scale: Option<f64>,
    checkpoints: Option<OneOrMany<f64>>,
    idle_refinement: Option<usize>,
    out: Option<PathBuf>,
}

/// Fully resolved settings of one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub n: Vec<u64>,
    pub alpha: Vec<f64>,
    pub x_m: f64,
    pub ell1: f64,
    pub q0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub reps: usize,
    pub limit_reps: usize,
    pub master_seed: u64,
    pub rep: u64,
    pub grid: usize,
    pub dt: f64,
    pub lambda: Option<f64>,
    pub s_alpha: Option<f64>,
    pub unit_scale: Option<f64>,
    pub checkpoints: Vec<f64>,
    pub idle_refinement: usize,
    /// Not part of the manifest: reruns may target another directory.
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunSpec {
    fn resolve(command: &str, flags: &SpecArgs, file: FileConfig) -> Result<Self, CliError> {
        // Per-command defaults for replication counts and horizons.
        let (reps, horizon) = match command {
            "drift-check" => (200, 1.0),
            "converge" => (2000, 1.0),
            "busy-period" => (2000, 20.0),
            _ => (1, 1.0),
        };
        let out = match flags.out.clone().or(file.out) {
            Some(p) => p,
            None => std::env::var_os(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("stablequeue-out"))
                .join(command),
        };
        let reps = flags.reps.or(file.reps).unwrap_or(reps);
        let spec = Self {
            n: flags
                .n
                .clone()
                .or(file.n.map(Into::into))
                .unwrap_or_else(|| vec![1000]),
            alpha: flags
                .alpha
                .clone()
                .or(file.alpha.map(Into::into))
                .unwrap_or_else(|| vec![1.5]),
            x_m: flags.x_m.or(file.x_m).unwrap_or(1.0),
            ell1: flags.ell1.or(file.ell1).unwrap_or(1.0),
            q0: flags.q0.or(file.q0).unwrap_or(1.0),
            horizon: flags.horizon.or(file.horizon).unwrap_or(horizon),
            reps,
            limit_reps: flags.limit_reps.or(file.limit_reps).unwrap_or(reps),
            master_seed: flags.master_seed.or(file.master_seed).unwrap_or(1),
            rep: flags.rep.or(file.rep).unwrap_or(0),
            grid: flags.grid.or(file.grid).unwrap_or(1001),
            dt: flags.dt.or(file.dt).unwrap_or(1e-3),
            lambda: flags.lambda.or(file.lambda),
            s_alpha: flags.s_alpha.or(file.s_alpha),
            unit_scale: flags.unit_scale.or(file.unit_scale),
            checkpoints: flags
                .checkpoints
                .clone()
                .or(file.checkpoints.map(Into::into))
                .unwrap_or_else(|| vec![0.5, 1.0]),
            idle_refinement: flags.idle_refinement.or(file.idle_refinement).unwrap_or(0),
            out,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), Error> {
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(invalid("n", "population sizes must be at least 1"));
        }
        if self.alpha.is_empty() {
            return Err(invalid("alpha", "need at least one tail exponent"));
        }
        for &alpha in &self.alpha {
            ServiceModel::new(alpha, self.x_m)?;
            ScalingConstants::new(1, alpha, self.ell1)?;
        }
        if !(self.q0 >= 0.0 && self.q0.is_finite()) {
            return Err(invalid(
                "q0",
                format!("must be non-negative, got {}", self.q0),
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(
                "T",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        if self.grid < 2 {
            return Err(invalid("grid", "need at least two grid points"));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(invalid(
                "dt",
                format!("must lie in (0, T], got {}", self.dt),
            ));
        }
        if self
            .checkpoints
            .iter()
            .any(|&t| !(t > 0.0 && t.is_finite()))
        {
            return Err(invalid("checkpoints", "scaled times must be positive"));
        }
        Ok(())
    }

    fn single_alpha(&self) -> Result<f64, Error> {
        match self.alpha.as_slice() {
            [a] => Ok(*a),
            _ => Err(invalid(
                "alpha",
                "this command takes a single tail exponent",
            )),
        }
    }

    fn single_n(&self) -> Result<u64, Error> {
        match self.n.as_slice() {
            [n] => Ok(*n),
            _ => Err(invalid("n", "this command takes a single population size")),
        }
    }

    fn model(&self) -> Result<ServiceModel, Error> {
        ServiceModel::new(self.single_alpha()?, self.x_m)
    }

    /// Limit process from explicit `lambda`/`s_alpha` when given, otherwise
    /// from the service law.
    fn limit_spec(&self) -> Result<LimitSpec, Error> {
        let alpha = self.single_alpha()?;
        let spec = match (self.lambda, self.s_alpha) {
            (None, None) => {
                LimitSpec::from_service(&self.model()?, self.q0, self.ell1, self.horizon, self.dt)?
            }
            (lambda, s_alpha) => {
                let model = self.model()?;
                let derived =
                    LimitSpec::from_service(&model, self.q0, self.ell1, self.horizon, self.dt)?;
                LimitSpec::new(
                    alpha,
                    self.q0,
                    lambda.unwrap_or(derived.lambda),
                    s_alpha.unwrap_or(derived.s_alpha),
                    self.horizon,
                    self.dt,
                )?
            }
        };
        match self.unit_scale {
            Some(c) => spec.with_unit_scale(c),
            None => Ok(spec),
        }
    }

    fn comparison(&self) -> Result<ComparisonConfig, Error> {
        Ok(ComparisonConfig {
            alpha: self.single_alpha()?,
            x_m: self.x_m,
            ell1: self.ell1,
            q0: self.q0,
            n_values: self.n.clone(),
            checkpoints: self.checkpoints.clone(),
            horizon: self.horizon,
            reps: self.reps,
            limit_reps: self.limit_reps,
            master_seed: self.master_seed,
            dt: self.dt,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(#[from] clap::Error),
    #[error("config file {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Run(Error::InvalidParameter { .. }) => 2,
            CliError::Run(_) => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (kind, parameter) = match self {
            CliError::Usage(_) => ("usage", None),
            CliError::Config { .. } => ("config", None),
            CliError::Run(e) => match e {
                Error::InvalidParameter { name, .. } => ("invalid_parameter", Some(*name)),
                Error::InvalidPath(_) => ("invalid_path", None),
                Error::EmptySample(_) => ("empty_sample", None),
                Error::Quadrature { .. } => ("quadrature", None),
                Error::Replication { .. } => ("replication", None),
                Error::Io(_) => ("io", None),
                Error::Csv(_) => ("csv", None),
                Error::Json(_) => ("json", None),
            },
        };
        serde_json::json!({
            "error": {
                "kind": kind,
                "parameter": parameter,
                "message": self.to_string().trim_end(),
            }
        })
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    command: &'a str,
    spec: &'a RunSpec,
    seeds: serde_json::Value,
    scaling: Vec<ScalingConstants>,
    files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    events: Option<serde_json::Value>,
}

/// Result of a successful command: human-readable summary lines.
#[derive(Debug, Default)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub summary: Vec<String>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<Outcome, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let file = match &cli.config {
        Some(path) => read_config(path)?,
        None => FileConfig::default(),
    };
    let command = cli.command.name();
    let spec = RunSpec::resolve(command, cli.command.args(), file)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(invalid("workers", "need at least one worker").into());
        }
        pool = pool.num_threads(w);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    std::fs::create_dir_all(&spec.out).map_err(Error::from)?;
    pool.install(|| match &cli.command {
        Command::Simulate(_) => cmd_simulate(&spec),
        Command::Limit(_) => cmd_limit(&spec),
        Command::DriftCheck(_) => cmd_drift_check(&spec),
        Command::Converge(_) => cmd_converge(&spec),
        Command::BusyPeriod(_) => cmd_busy_period(&spec),
        Command::Excursions(_) => cmd_excursions(&spec),
    })
    .map_err(CliError::from)
}

fn read_config(path: &Path) -> Result<FileConfig, CliError> {
    let config_err = |reason: String| CliError::Config {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| config_err(e.to_string()))?;
    toml::from_str(&text).map_err(|e| config_err(e.to_string()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_report(
    dir: &Path,
    stem: &str,
    report: &ConvergenceReport,
    files: &mut Vec<String>,
) -> Result<(), Error> {
    let json = format!("{stem}.json");
    let mut w = create(dir, &json)?;
    report.write_json(&mut w)?;
    w.flush()?;
    let csv = format!("{stem}.csv");
    let mut w = create(dir, &csv)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    files.push(json);
    files.push(csv);
    Ok(())
}

fn write_manifest(
    spec: &RunSpec,
    command: &str,
    seeds: serde_json::Value,
    scaling: Vec<ScalingConstants>,
    mut files: Vec<String>,
    events: Option<serde_json::Value>,
) -> Result<(), Error> {
    files.sort();
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        command,
        spec,
        seeds,
        scaling,
        files,
        events,
    };
    let mut w = create(&spec.out, "manifest.json")?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn scaling_for(spec: &RunSpec) -> Result<Vec<ScalingConstants>, Error> {
    let mut out = Vec::new();
    for &alpha in &spec.alpha {
        for &n in &spec.n {
            out.push(ScalingConstants::new(n, alpha, spec.ell1)?);
        }
    }
    Ok(out)
}

fn cmd_simulate(spec: &RunSpec) -> Result<Outcome, Error> {
    let model = spec.model()?;
    let n = spec.single_n()?;
    let c = ScalingConstants::new(n, model.alpha, spec.ell1)?;
    let queue = QueueSpec::heavy_traffic(model, &c, spec.q0, spec.horizon)?;
    let seed = SeedSpec::new(spec.master_seed, spec.rep);
    let run = simulate_queue(&queue, &mut seed.rng())?;
    let mut files = run.write_exports(&spec.out, model.mean, spec.idle_refinement)?;
    let scaled = rescale(&run.queue, &c, spec.horizon, spec.grid)?;
    let mut w = create(&spec.out, "queue_scaled.csv")?;
    scaled.write_csv(&mut w)?;
    w.flush()?;
    files.push("queue_scaled.csv".into());

    let events = serde_json::json!({
        "arrivals": run.arrivals.len(),
        "departures": run.departures,
        "events": run.event_count(),
        "initial_backlog": queue.backlog,
    });
    write_manifest(
        spec,
        "simulate",
        serde_json::json!({ "master_seed": spec.master_seed, "rep": spec.rep }),
        vec![c],
        files,
        Some(events),
    )?;
    Ok(Outcome {
        out_dir: spec.out.clone(),
        summary: vec![
            format!("events: {}", run.event_count()),
            format!("arrivals: {}", run.arrivals.len()),
            format!("busy fraction: {:.6}", run.busy_fraction()),
            format!("final queue: {}", run.queue.last_value()),
        ],
    })
}

fn limit_rep_seed(spec: &RunSpec) -> u64 {
    derive_seed(spec.master_seed, &[u64::from_le_bytes(*b"limit\0\0\0")])
}

fn cmd_limit(spec: &RunSpec) -> Result<Outcome, Error> {
    let limit = spec.limit_spec()?;
    let seed = limit_rep_seed(spec);
    let dir = &spec.out;
    let mut files = Vec::new();
    let mut busy = csv::Writer::from_writer(create(dir, "busy_periods.csv")?);
    busy.write_record(["rep", "busy_period"])?;
    for rep in 0..spec.reps as u64 {
        let free = simulate_limit_free(&limit, &mut SeedSpec::new(seed, rep).rng())?;
        let phi = free.reflect();
        for (name, path) in [("free", &free), ("reflected", &phi)] {
            let file = format!("{name}_{rep:04}.csv");
            let mut w = create(dir, &file)?;
            path.write_csv(&mut w)?;
            w.flush()?;
            files.push(file);
        }
        let h = free.hitting_time(0.0).map(fmt_f64).unwrap_or_default();
        busy.write_record([rep.to_string(), h])?;
    }
    busy.flush()?;
    files.push("busy_periods.csv".into());
    write_manifest(
        spec,
        "limit",
        serde_json::json!({ "master_seed": spec.master_seed, "path_seed": seed }),
        Vec::new(),
        files,
        Some(serde_json::to_value(limit)?),
    )?;
    Ok(Outcome {
        out_dir: spec.out.clone(),
        summary: vec![format!(
            "{} limit paths, alpha {}, q0 {}, lambda {}, s_alpha {}, unit scale {}",
            spec.reps, limit.alpha, limit.q0, limit.lambda, limit.s_alpha, limit.unit_scale
        )],
    })
}

fn cmd_drift_check(spec: &RunSpec) -> Result<Outcome, Error> {
    let cfg = DriftConfig {
        alphas: spec.alpha.clone(),
        n_values: spec.n.clone(),
        horizon: spec.horizon,
        reps: spec.reps,
        master_seed: spec.master_seed,
        x_m: spec.x_m,
        ell1: spec.ell1,
    };
    let report = drift_convergence_report(&cfg)?;
    let mut files = Vec::new();
    write_report(&spec.out, "drift_report", &report, &mut files)?;
    // Repeat-count traces of the first replication of each cell.
    for e in report.metric("drift") {
        let model = ServiceModel::new(e.alpha, spec.x_m)?;
        let c = ScalingConstants::new(e.n, e.alpha, spec.ell1)?;
        let run = simulate_marked_poisson(
            e.n,
            model.lambda / e.n as f64,
            c.unscaled_time(spec.horizon),
            &mut SeedSpec::new(e.seed, 0).rng(),
        )?;
        let file = format!("trace_alpha{}_n{}.csv", e.alpha, e.n);
        let mut w = create(&spec.out, &file)?;
        run.write_trace_csv(&mut w)?;
        w.flush()?;
        files.push(file);
    }
    let summary = report
        .metric("drift")
        .map(|e| {
            format!(
                "alpha {} n {}: median sup distance {:.6}",
                e.alpha, e.n, e.value
            )
        })
        .collect();
    write_manifest(
        spec,
        "drift-check",
        seeds_of(&report),
        scaling_for(spec)?,
        files,
        None,
    )?;
    Ok(Outcome {
        out_dir: spec.out.clone(),
        summary,
    })
}

fn seeds_of(report: &ConvergenceReport) -> serde_json::Value {
    let mut cells: Vec<serde_json::Value> = report
        .entries
        .iter()
        .map(|e| serde_json::json!({ "alpha": e.alpha, "n": e.n, "seed": e.seed, "limit_seed": e.limit_seed }))
        .collect();
    cells.dedup();
    serde_json::json!({ "master_seed": report.master_seed, "cells": cells })
}

fn cmd_converge(spec: &RunSpec) -> Result<Outcome, Error> {
    let cfg = spec.comparison()?;
    let report = queue_limit_comparison(&cfg)?;
    let idle = idle_time_report(&ComparisonConfig {
        horizon: spec
            .horizon
            .max(cfg.checkpoints.iter().copied().fold(0.0, f64::max)),
        ..cfg.clone()
    })?;
    let mut files = Vec::new();
    write_report(&spec.out, "converge_report", &report, &mut files)?;
    write_report(&spec.out, "idle_report", &idle, &mut files)?;
    let mut summary: Vec<String> = report
        .entries
        .iter()
        .map(|e| {
            format!(
                "n {} t {}: KS {:.4}",
                e.n,
                e.checkpoint.unwrap_or(f64::NAN),
                e.value
            )
        })
        .collect();
    summary.extend(
        idle.entries
            .iter()
            .map(|e| format!("n {}: median scaled idle {:.6}", e.n, e.value)),
    );
    let mut seeds = seeds_of(&report);
    seeds["idle_cells"] = seeds_of(&idle)["cells"].clone();
    write_manifest(spec, "converge", seeds, scaling_for(spec)?, files, None)?;
    Ok(Outcome {
        out_dir: spec.out.clone(),
        summary,
    })
}

fn cmd_busy_period(spec: &RunSpec) -> Result<Outcome, Error> {
    let cfg = spec.comparison()?;
    let report = busy_period_comparison(&cfg)?;
    let mut files = Vec::new();
    write_report(&spec.out, "busy_report", &report, &mut files)?;
    let summary = report
        .entries
        .iter()
        .map(|e| {
            format!(
                "n {}: KS {:.4}, median scaled busy period {:.4}",
                e.n,
                e.value,
                e.quantiles.map_or(f64::NAN, |q| q.p50)
            )
        })
        .collect();
    write_manifest(
        spec,
        "busy-period",
        seeds_of(&report),
        scaling_for(spec)?,
        files,
        None,
    )?;
    Ok(Outcome {
        out_dir: spec.out.clone(),
        summary,
    })
}

fn cmd_excursions(spec: &RunSpec) -> Result<Outcome, Error> {
    let limit = spec.limit_spec()?;
    let seed = limit_rep_seed(spec);
    let mut w = csv::Writer::from_writer(create(&spec.out, "excursions.csv")?);
    w.write_record(["rep", "start", "end", "length", "height", "censored"])?;
    let mut all = Vec::new();
    for rep in 0..spec.reps as u64 {
        let free = simulate_limit_free(&limit, &mut SeedSpec::new(seed, rep).rng())?;
        for e in free.excursions() {
            w.write_record([
                rep.to_string(),
                fmt_f64(e.start),
                fmt_f64(e.end),
                fmt_f64(e.length()),
                fmt_f64(e.height),
                e.censored.to_string(),
            ])?;
            all.push(e);
        }
    }
    w.flush()?;
    let summary = excursion_summary(&all);
    let mut s = create(&spec.out, "excursion_summary.json")?;
    serde_json::to_writer_pretty(&mut s, &summary)?;
    s.write_all(b"\n")?;
    s.flush()?;
    write_manifest(
        spec,
        "excursions",
        serde_json::json!({ "master_seed": spec.master_seed, "path_seed": seed }),
        Vec::new(),
        vec!["excursions.csv".into(), "excursion_summary.json".into()],
        Some(serde_json::to_value(limit)?),
    )?;
    Ok(Outcome {
        out_dir: spec.out.clone(),
        summary: vec![format!(
            "{} excursions ({} completed), mean length {:.4}, max height {:.4}",
            summary.count, summary.completed, summary.mean_length, summary.max_height
        )],
    })
}

/// Process entry point: runs the command and maps failures to a JSON error
/// on stderr and a nonzero exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            println!("output: {}", outcome.out_dir.display());
            0
        }
        Err(CliError::Usage(e))
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
