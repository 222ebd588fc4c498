//! Replicated experiments aggregated into seed-carrying reports.
//!
//! Every `(alpha, n)` cell draws its replications from
//! `SeedSpec::new(cell_seed, rep)` where `cell_seed` is derived from the
//! master seed, an experiment tag, `alpha` and `n`, and is stored in the
//! report. Replications run in parallel on the current rayon pool and are
//! reduced in replication order, so results do not depend on the pool size.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrivals_poisson::{drift_sup_statistic, jumps, simulate_marked_poisson};
use crate::distributions::{derive_seed, SeedSpec, ServiceModel};
use crate::error::{invalid, Error, Result};
use crate::limit_process::{busy_period, simulate_limit_reflected, LimitSpec};
use crate::paths::{fmt_f64, Excursion};
use crate::queue_sim::{simulate_summary, QueueSpec};
use crate::scaling::ScalingConstants;

use super::ks::{ks_two_sample, Ecdf};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

const TAG_DRIFT: u64 = 1;
const TAG_QUEUE: u64 = 2;
const TAG_LIMIT: u64 = 3;
const TAG_IDLE: u64 = 4;
const TAG_BUSY: u64 = 5;
const TAG_LIMIT_BUSY: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
}

impl Quantiles {
    pub fn of(sample: &[f64]) -> Option<Self> {
        let e = Ecdf::new(sample).ok()?;
        Some(Self {
            p10: e.quantile(0.1),
            p25: e.quantile(0.25),
            p50: e.quantile(0.5),
            p75: e.quantile(0.75),
            p90: e.quantile(0.9),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceEntry {
    pub alpha: f64,
    pub n: u64,
    pub reps: usize,
    /// Seed of the prelimit replications: rep `r` uses `SeedSpec::new(seed, r)`.
    pub seed: u64,
    /// Seed of the limit-process replications, for two-sided comparisons.
    pub limit_seed: Option<u64>,
    /// Scaled time at which the samples were taken, if any.
    pub checkpoint: Option<f64>,
    pub metric: String,
    pub value: f64,
    /// Quantiles of the prelimit per-replication values.
    pub quantiles: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema_version: u32,
    pub statistic: String,
    pub master_seed: u64,
    pub entries: Vec<ConvergenceEntry>,
}

impl ConvergenceReport {
    fn new(statistic: &str, master_seed: u64) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            statistic: statistic.to_string(),
            master_seed,
            entries: Vec::new(),
        }
    }

    /// Entries with the given metric, in report order.
    pub fn metric<'a>(
        &'a self,
        metric: &'a str,
    ) -> impl Iterator<Item = &'a ConvergenceEntry> + 'a {
        self.entries.iter().filter(move |e| e.metric == metric)
    }

    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut writer, self)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    /// One row per entry; empty cells for absent optional fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "alpha",
            "n",
            "reps",
            "seed",
            "limit_seed",
            "checkpoint",
            "metric",
            "value",
            "p10",
            "p25",
            "p50",
            "p75",
            "p90",
        ])?;
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        for e in &self.entries {
            let q = e.quantiles;
            w.write_record([
                fmt_f64(e.alpha),
                e.n.to_string(),
                e.reps.to_string(),
                e.seed.to_string(),
                e.limit_seed.map(|s| s.to_string()).unwrap_or_default(),
                opt(e.checkpoint),
                e.metric.clone(),
                fmt_f64(e.value),
                opt(q.map(|q| q.p10)),
                opt(q.map(|q| q.p25)),
                opt(q.map(|q| q.p50)),
                opt(q.map(|q| q.p75)),
                opt(q.map(|q| q.p90)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn cell_seed(master: u64, tag: u64, alpha: f64, n: u64) -> u64 {
    derive_seed(master, &[tag, alpha.to_bits(), n])
}

fn replicate<T, F>(reps: usize, alpha: f64, n: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            f(rep as u64).map_err(|e| Error::Replication {
                alpha,
                n,
                rep,
                source: Box::new(e),
            })
        })
        .collect()
}

fn median_entry(alpha: f64, n: u64, seed: u64, metric: &str, sample: &[f64]) -> ConvergenceEntry {
    let quantiles = Quantiles::of(sample);
    ConvergenceEntry {
        alpha,
        n,
        reps: sample.len(),
        seed,
        limit_seed: None,
        checkpoint: None,
        metric: metric.to_string(),
        value: quantiles.map_or(f64::NAN, |q| q.p50),
        quantiles,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub alphas: Vec<f64>,
    pub n_values: Vec<u64>,
    /// Scaled horizon.
    pub horizon: f64,
    pub reps: usize,
    pub master_seed: u64,
    pub x_m: f64,
    pub ell1: f64,
}

/// Sup distances between the scaled repeat counts (exact, upper and lower
/// bound) and the parabola `lambda^2 t^2 / 2` on `[0, horizon]`, one sample
/// per replication. Metrics `drift`, `drift_upper` and `drift_lower` report
/// the median.
pub fn drift_convergence_report(cfg: &DriftConfig) -> Result<ConvergenceReport> {
    let mut report =
        ConvergenceReport::new("median sup distance to the drift parabola", cfg.master_seed);
    if cfg.reps == 0 {
        return Ok(report);
    }
    for &alpha in &cfg.alphas {
        let model = ServiceModel::new(alpha, cfg.x_m)?;
        for &n in &cfg.n_values {
            let c = ScalingConstants::new(n, alpha, cfg.ell1)?;
            let seed = cell_seed(cfg.master_seed, TAG_DRIFT, alpha, n);
            let rows = replicate(cfg.reps, alpha, n, |rep| {
                drift_statistics(&model, &c, cfg.horizon, SeedSpec::new(seed, rep))
            })?;
            for (k, metric) in ["drift", "drift_upper", "drift_lower"].iter().enumerate() {
                let sample: Vec<f64> = rows.iter().map(|r| r[k]).collect();
                report
                    .entries
                    .push(median_entry(alpha, n, seed, metric, &sample));
            }
        }
    }
    Ok(report)
}

/// Drift distances `[exact, upper, lower]` for one replication.
pub fn drift_statistics(
    model: &ServiceModel,
    c: &ScalingConstants,
    horizon: f64,
    seed: SeedSpec,
) -> Result<[f64; 3]> {
    let lambda = model.lambda;
    let run = simulate_marked_poisson(
        c.n,
        lambda / c.n as f64,
        c.unscaled_time(horizon),
        &mut seed.rng(),
    )?;
    let b = run.bounds();
    let stat = |seq: &[u64]| {
        let (t, v) = jumps(&run.event_times, seq);
        drift_sup_statistic(&t, &v, c, lambda, horizon)
    };
    Ok([stat(&b.exact), stat(&b.upper), stat(&b.lower)])
}

/// Shared configuration of the prelimit-versus-limit experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub alpha: f64,
    pub x_m: f64,
    pub ell1: f64,
    pub q0: f64,
    pub n_values: Vec<u64>,
    /// Scaled times for marginal comparisons.
    pub checkpoints: Vec<f64>,
    /// Scaled horizon for idle-time and busy-period experiments.
    pub horizon: f64,
    pub reps: usize,
    pub limit_reps: usize,
    pub master_seed: u64,
    /// Grid step of the limit process.
    pub dt: f64,
}

impl ComparisonConfig {
    fn model(&self) -> Result<ServiceModel> {
        ServiceModel::new(self.alpha, self.x_m)
    }

    fn limit_spec(&self, horizon: f64) -> Result<LimitSpec> {
        LimitSpec::from_service(
            &self.model()?,
            self.q0,
            self.ell1,
            horizon,
            self.dt.min(horizon),
        )
    }
}

/// KS distance between `s_n Q_n(tau_n(t))` and the reflected limit at each
/// checkpoint and population size (metric `ks`).
pub fn queue_limit_comparison(cfg: &ComparisonConfig) -> Result<ConvergenceReport> {
    let mut report = ConvergenceReport::new(
        "two-sample KS distance to the reflected limit",
        cfg.master_seed,
    );
    if cfg.reps == 0 || cfg.limit_reps == 0 || cfg.checkpoints.is_empty() {
        return Ok(report);
    }
    let mut checkpoints = cfg.checkpoints.clone();
    checkpoints.sort_by(f64::total_cmp);
    if checkpoints[0].is_nan() || checkpoints[0] <= 0.0 {
        return Err(invalid("checkpoints", "scaled times must be positive"));
    }
    let horizon = *checkpoints.last().expect("non-empty");
    let model = cfg.model()?;
    let limit = cfg.limit_spec(horizon)?;
    let limit_seed = cell_seed(cfg.master_seed, TAG_LIMIT, cfg.alpha, 0);
    let limit_rows = replicate(cfg.limit_reps, cfg.alpha, 0, |rep| {
        let phi = simulate_limit_reflected(&limit, &mut SeedSpec::new(limit_seed, rep).rng())?;
        Ok(checkpoints.iter().map(|&t| phi.eval(t)).collect::<Vec<_>>())
    })?;
    for &n in &cfg.n_values {
        let c = ScalingConstants::new(n, cfg.alpha, cfg.ell1)?;
        let spec = QueueSpec::heavy_traffic(model, &c, cfg.q0, horizon)?;
        let unscaled: Vec<f64> = checkpoints.iter().map(|&t| c.unscaled_time(t)).collect();
        let seed = cell_seed(cfg.master_seed, TAG_QUEUE, cfg.alpha, n);
        let rows = replicate(cfg.reps, cfg.alpha, n, |rep| {
            let s = simulate_summary(&spec, &unscaled, false, &mut SeedSpec::new(seed, rep).rng())?;
            Ok(s.checkpoints
                .iter()
                .map(|&q| q as f64 * c.space_factor)
                .collect::<Vec<_>>())
        })?;
        for (k, &t) in checkpoints.iter().enumerate() {
            let pre: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let lim: Vec<f64> = limit_rows.iter().map(|r| r[k]).collect();
            report.entries.push(ConvergenceEntry {
                alpha: cfg.alpha,
                n,
                reps: cfg.reps,
                seed,
                limit_seed: Some(limit_seed),
                checkpoint: Some(t),
                metric: "ks".into(),
                value: ks_two_sample(&pre, &lim)?.statistic,
                quantiles: Quantiles::of(&pre),
            });
        }
    }
    Ok(report)
}

/// Median of `I_n(tau_n(horizon)) / tau_n(1)`, the supremum over
/// `[0, horizon]` of the scaled cumulative idle time (metric `idle`).
pub fn idle_time_report(cfg: &ComparisonConfig) -> Result<ConvergenceReport> {
    let mut report = ConvergenceReport::new("median scaled cumulative idle time", cfg.master_seed);
    if cfg.reps == 0 {
        return Ok(report);
    }
    let model = cfg.model()?;
    for &n in &cfg.n_values {
        let c = ScalingConstants::new(n, cfg.alpha, cfg.ell1)?;
        let spec = QueueSpec::heavy_traffic(model, &c, cfg.q0, cfg.horizon)?;
        let seed = cell_seed(cfg.master_seed, TAG_IDLE, cfg.alpha, n);
        let sample = replicate(cfg.reps, cfg.alpha, n, |rep| {
            let s = simulate_summary(&spec, &[], false, &mut SeedSpec::new(seed, rep).rng())?;
            Ok(s.idle / c.time_factor)
        })?;
        let mut entry = median_entry(cfg.alpha, n, seed, "idle", &sample);
        entry.checkpoint = Some(cfg.horizon);
        report.entries.push(entry);
    }
    Ok(report)
}

/// KS distance between the scaled first busy period `H / tau_n(1)` and the
/// first passage of the free limit to zero (metric `ks`). Periods longer
/// than the horizon count as `+inf` on both sides.
pub fn busy_period_comparison(cfg: &ComparisonConfig) -> Result<ConvergenceReport> {
    let mut report = ConvergenceReport::new(
        "two-sample KS distance of first busy periods",
        cfg.master_seed,
    );
    if cfg.reps == 0 || cfg.limit_reps == 0 {
        return Ok(report);
    }
    let model = cfg.model()?;
    let limit = cfg.limit_spec(cfg.horizon)?;
    let limit_seed = cell_seed(cfg.master_seed, TAG_LIMIT_BUSY, cfg.alpha, 0);
    let lim = replicate(cfg.limit_reps, cfg.alpha, 0, |rep| {
        Ok(
            busy_period(&limit, &mut SeedSpec::new(limit_seed, rep).rng())?
                .unwrap_or(f64::INFINITY),
        )
    })?;
    for &n in &cfg.n_values {
        let c = ScalingConstants::new(n, cfg.alpha, cfg.ell1)?;
        let spec = QueueSpec::heavy_traffic(model, &c, cfg.q0, cfg.horizon)?;
        let seed = cell_seed(cfg.master_seed, TAG_BUSY, cfg.alpha, n);
        let pre = replicate(cfg.reps, cfg.alpha, n, |rep| {
            let s = simulate_summary(&spec, &[], true, &mut SeedSpec::new(seed, rep).rng())?;
            Ok(s.first_empty.map_or(f64::INFINITY, |h| h / c.time_factor))
        })?;
        report.entries.push(ConvergenceEntry {
            alpha: cfg.alpha,
            n,
            reps: cfg.reps,
            seed,
            limit_seed: Some(limit_seed),
            checkpoint: None,
            metric: "ks".into(),
            value: ks_two_sample(&pre, &lim)?.statistic,
            quantiles: Quantiles::of(&pre),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcursionSummary {
    pub count: usize,
    /// Excursions that ended before the horizon.
    pub completed: usize,
    pub mean_length: f64,
    pub max_length: f64,
    pub max_height: f64,
}

pub fn excursion_summary(excursions: &[Excursion]) -> ExcursionSummary {
    let count = excursions.len();
    let completed = excursions.iter().filter(|e| !e.censored).count();
    let total: f64 = excursions.iter().map(Excursion::length).sum();
    ExcursionSummary {
        count,
        completed,
        mean_length: if count == 0 {
            0.0
        } else {
            total / count as f64
        },
        max_length: excursions.iter().map(Excursion::length).fold(0.0, f64::max),
        max_height: excursions.iter().map(|e| e.height).fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drift_cfg(reps: usize) -> DriftConfig {
        DriftConfig {
            alphas: vec![1.5],
            n_values: vec![1000],
            horizon: 1.0,
            reps,
            master_seed: 9,
            x_m: 1.0,
            ell1: 1.0,
        }
    }

    #[test]
    fn zero_reps_gives_empty_report() {
        let r = drift_convergence_report(&drift_cfg(0)).unwrap();
        assert!(r.entries.is_empty());
        assert_eq!(r.schema_version, REPORT_SCHEMA_VERSION);
    }

    #[test]
    fn single_rep_matches_manual_computation() {
        let r = drift_convergence_report(&drift_cfg(1)).unwrap();
        let e = r.metric("drift").next().unwrap();
        let model = ServiceModel::new(1.5, 1.0).unwrap();
        let c = ScalingConstants::new(1000, 1.5, 1.0).unwrap();
        let run = simulate_marked_poisson(
            1000,
            model.lambda / 1000.0,
            c.time_factor,
            &mut SeedSpec::new(e.seed, 0).rng(),
        )
        .unwrap();
        // Direct evaluation on a fine grid plus the jump points.
        let drift = |t: f64| model.lambda * model.lambda * t * t / 2.0;
        let mut sup: f64 = 0.0;
        for k in 0..=100_000 {
            let t = k as f64 / 100_000.0;
            sup = sup.max((c.space_factor * run.repeats.eval(t * c.time_factor) - drift(t)).abs());
        }
        for &s in &run.event_times {
            let t = s / c.time_factor;
            sup = sup.max((c.space_factor * run.repeats.eval_left(s) - drift(t)).abs());
            sup = sup.max((c.space_factor * run.repeats.eval(s) - drift(t)).abs());
        }
        assert!((e.value - sup).abs() < 1e-9, "{} vs {sup}", e.value);
    }

    #[test]
    fn reports_reproducible_and_pool_independent() {
        let cfg = drift_cfg(8);
        let a = drift_convergence_report(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| drift_convergence_report(&cfg)).unwrap();
        assert_eq!(a, b);
        let mut json = Vec::new();
        a.write_json(&mut json).unwrap();
        let back: ConvergenceReport = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, a);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
    }

    #[test]
    fn excursion_summary_counts() {
        let ex = [
            Excursion {
                start: 0.0,
                end: 1.0,
                height: 2.0,
                censored: false,
            },
            Excursion {
                start: 2.0,
                end: 5.0,
                height: 1.0,
                censored: true,
            },
        ];
        let s = excursion_summary(&ex);
        assert_eq!((s.count, s.completed), (2, 1));
        assert_eq!((s.mean_length, s.max_length, s.max_height), (2.0, 3.0, 2.0));
        assert_eq!(excursion_summary(&[]).count, 0);
    }
}
