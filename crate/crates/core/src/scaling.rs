//! Heavy-traffic scaling constants.
//!
//! Time is accelerated by `tau_n(1) = n^(alpha/(2 alpha - 1)) * ell1` and space
//! is shrunk by `s_n = n^(-1/(2 alpha - 1)) * ell2` with `ell2 = ell1^-2`. The
//! two balance the quadratic drift `k^2 / n` of the repeated-marks counter
//! against stable fluctuations of order `k^(1/alpha)` over `k` services, so
//! `s_n * tau_n(1)^2 / n = 1` whatever `ell1` is.
//!
//! The time exponent is `alpha / (2 alpha - 1)` throughout. The variant
//! `alpha / (alpha - 1)` that appears once in the derivation is a misprint: it
//! is inconsistent with the definition of `tau_n` it summarises.

use serde::{Deserialize, Serialize};

use crate::distributions::check_alpha;
use crate::error::{invalid, Error, Result};
use crate::paths::{GridPath, StepPath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstants {
    pub n: u64,
    pub alpha: f64,
    pub ell1: f64,
    pub ell2: f64,
    /// `tau_n(1)`.
    pub time_factor: f64,
    /// `s_n`.
    pub space_factor: f64,
    /// `n^(1/(2 alpha - 1)) / ell2`: initial backlog per unit of `q0`.
    pub backlog_factor: f64,
}

impl ScalingConstants {
    pub fn new(n: u64, alpha: f64, ell1: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "population size must be at least 1"));
        }
        check_alpha(alpha)?;
        if !(ell1 > 0.0 && ell1.is_finite()) {
            return Err(invalid("ell1", format!("must be positive, got {ell1}")));
        }
        let nf = n as f64;
        let denom = 2.0 * alpha - 1.0;
        let ell2 = 1.0 / (ell1 * ell1);
        let root = nf.powf(1.0 / denom);
        Ok(Self {
            n,
            alpha,
            ell1,
            ell2,
            time_factor: nf.powf(alpha / denom) * ell1,
            space_factor: ell2 / root,
            backlog_factor: root / ell2,
        })
    }

    pub fn time_exponent(&self) -> f64 {
        self.alpha / (2.0 * self.alpha - 1.0)
    }

    pub fn space_exponent(&self) -> f64 {
        -1.0 / (2.0 * self.alpha - 1.0)
    }

    /// Unscaled time `tau_n(t)`.
    pub fn unscaled_time(&self, t: f64) -> f64 {
        t * self.time_factor
    }

    /// `N_n(0) = ceil(q0 * n^(1/(2 alpha - 1)) / ell2)`. Products that land
    /// within a few ulps above an integer are not bumped to the next one.
    pub fn initial_backlog(&self, q0: f64) -> u64 {
        let x = q0 * self.backlog_factor;
        let nearest = x.round();
        if (x - nearest).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            nearest as u64
        } else {
            x.ceil() as u64
        }
    }
}

/// `t -> s_n * path(t * tau_n(1))` sampled on `grid` points spanning `[0, horizon]`.
pub fn rescale(
    path: &StepPath,
    c: &ScalingConstants,
    horizon: f64,
    grid: usize,
) -> Result<GridPath> {
    if grid < 2 {
        return Err(invalid("grid", "need at least two grid points"));
    }
    let needed = horizon * c.time_factor;
    // One relative ulp of slack for horizons computed as t * tau_n(1).
    if path.horizon() < needed * (1.0 - 2.0 * f64::EPSILON) {
        return Err(Error::InvalidPath(format!(
            "path known up to {} but rescaling to {horizon} needs {needed}",
            path.horizon()
        )));
    }
    GridPath::from_fn(horizon, grid - 1, |t| {
        c.space_factor * path.eval(t * c.time_factor)
    })
}
