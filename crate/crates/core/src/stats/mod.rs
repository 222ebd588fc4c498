//! Distribution comparisons, the stable CDF oracle and convergence reports.

mod ks;
mod reports;
mod stable_cdf;

pub use ks::{ks_discrete, ks_one_sample, ks_two_sample, Ecdf, KsResult};
pub use reports::{
    busy_period_comparison, drift_convergence_report, drift_statistics, excursion_summary,
    idle_time_report, queue_limit_comparison, ComparisonConfig, ConvergenceEntry,
    ConvergenceReport, DriftConfig, ExcursionSummary, Quantiles, REPORT_SCHEMA_VERSION,
};
pub use stable_cdf::{calibrate_fluctuation_scale, stable_cdf_oracle, stable_quantile};

/// Sample median (mean of the two middle values for even sizes).
pub fn median(sample: &[f64]) -> Option<f64> {
    Ecdf::new(sample).ok().map(|e| e.quantile(0.5))
}
