//! The heavy-traffic limit `q0 + s_alpha * c * S(t) - lambda^2 t^2 / 2` on a
//! uniform grid, its reflection, and its first passage to zero.
//!
//! `S` is the unit spectrally positive stable process (Brownian motion with
//! variance 2 at `alpha = 2`), `s_alpha = E[S]^(-(alpha + 1) / alpha)`, and
//! `c` (`unit_scale`) carries the normalisation of the service law. Grid values
//! are exact in distribution because stable increments are sampled exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{check_alpha, ServiceLaw, ServiceModel, StableSampler};
use crate::error::{invalid, Result};
use crate::paths::{GridPath, Reflection};

/// `mean^(-(alpha + 1) / alpha)`.
pub fn s_alpha(mean: f64, alpha: f64) -> Result<f64> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(invalid("mean", format!("must be positive, got {mean}")));
    }
    Ok(mean.powf(-(alpha + 1.0) / alpha))
}

/// Normalisation of the limit noise for a service law, before the
/// slowly-varying correction.
///
/// Below `alpha = 2` only the service sums matter and this is the stable
/// fluctuation scale of the law. At `alpha = 2` the Poisson arrival noise is
/// of the same order and adds to the service noise, giving `sqrt(E[S^2] / 2)`.
pub fn noise_scale(model: &ServiceModel) -> Result<f64> {
    let unsupported = || {
        invalid(
            "alpha",
            format!(
                "no limit normalisation for a {:?} law with alpha = {}",
                model.law, model.alpha
            ),
        )
    };
    match model.law {
        ServiceLaw::Pareto if model.alpha < 2.0 => {
            model.fluctuation_scale().ok_or_else(unsupported)
        }
        ServiceLaw::Exponential if model.alpha == 2.0 => model
            .second_moment()
            .map(|m2| (m2 / 2.0).sqrt())
            .ok_or_else(unsupported),
        _ => Err(unsupported()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSpec {
    pub alpha: f64,
    pub q0: f64,
    pub lambda: f64,
    pub s_alpha: f64,
    /// Multiplies `s_alpha`; 1 for the unit-scale process.
    pub unit_scale: f64,
    pub horizon: f64,
    /// Requested grid step; the grid uses `horizon / steps()`.
    pub dt: f64,
}

impl LimitSpec {
    pub fn new(
        alpha: f64,
        q0: f64,
        lambda: f64,
        s_alpha: f64,
        horizon: f64,
        dt: f64,
    ) -> Result<Self> {
        let spec = Self {
            alpha,
            q0,
            lambda,
            s_alpha,
            unit_scale: 1.0,
            horizon,
            dt,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Limit of the scaled queue fed by `model`, with time constant `ell1`.
    pub fn from_service(
        model: &ServiceModel,
        q0: f64,
        ell1: f64,
        horizon: f64,
        dt: f64,
    ) -> Result<Self> {
        if !(ell1 > 0.0 && ell1.is_finite()) {
            return Err(invalid("ell1", format!("must be positive, got {ell1}")));
        }
        let alpha = model.alpha;
        let spec = Self {
            alpha,
            q0,
            lambda: model.lambda,
            s_alpha: s_alpha(model.mean, alpha)?,
            unit_scale: noise_scale(model)? * ell1.powf(1.0 / alpha - 2.0),
            horizon,
            dt,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_unit_scale(mut self, unit_scale: f64) -> Result<Self> {
        self.unit_scale = unit_scale;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        let finite_nonneg = |name, x: f64| {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(invalid(
                    name,
                    format!("must be finite and non-negative, got {x}"),
                ))
            }
        };
        finite_nonneg("q0", self.q0)?;
        finite_nonneg("lambda", self.lambda)?;
        finite_nonneg("s_alpha", self.s_alpha)?;
        finite_nonneg("unit_scale", self.unit_scale)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(
                "T",
                format!("horizon must be positive, got {}", self.horizon),
            ));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(invalid(
                "dt",
                format!("must lie in (0, T], got {}", self.dt),
            ));
        }
        Ok(())
    }

    /// Number of grid steps: `horizon / dt` rounded up, ignoring rounding
    /// noise when `dt` divides the horizon.
    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt - 1e-9).ceil() as usize).max(1)
    }

    /// Coefficient in front of the unit stable process.
    pub fn noise(&self) -> f64 {
        self.s_alpha * self.unit_scale
    }

    pub fn drift(&self, t: f64) -> f64 {
        0.5 * self.lambda * self.lambda * t * t
    }
}

/// Grid walk of the free limit, one value per grid point.
struct LimitWalk<'a, R: ?Sized> {
    spec: &'a LimitSpec,
    sampler: StableSampler,
    grid_dt: f64,
    steps: usize,
    k: usize,
    stable: f64,
    rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> LimitWalk<'a, R> {
    fn new(spec: &'a LimitSpec, rng: &'a mut R) -> Result<Self> {
        spec.validate()?;
        let steps = spec.steps();
        Ok(Self {
            spec,
            sampler: StableSampler::new(spec.alpha)?,
            grid_dt: spec.horizon / steps as f64,
            steps,
            k: 0,
            stable: 0.0,
            rng,
        })
    }

    fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.spec.horizon
        } else {
            k as f64 * self.grid_dt
        }
    }
}

impl<R: Rng + ?Sized> Iterator for LimitWalk<'_, R> {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<(f64, f64)> {
        if self.k > self.steps {
            return None;
        }
        let noise = self.spec.noise();
        if self.k > 0 && noise > 0.0 {
            self.stable += self.sampler.increment(self.grid_dt, self.rng);
        }
        let t = self.time(self.k);
        self.k += 1;
        Some((t, self.spec.q0 + noise * self.stable - self.spec.drift(t)))
    }
}

/// Free limit process on the grid; the value at 0 is exactly `q0`.
pub fn simulate_limit_free<R: Rng + ?Sized>(spec: &LimitSpec, rng: &mut R) -> Result<GridPath> {
    let values = LimitWalk::new(spec, rng)?.map(|(_, v)| v).collect();
    GridPath::new(spec.horizon, values)
}

pub fn simulate_limit_reflected<R: Rng + ?Sized>(
    spec: &LimitSpec,
    rng: &mut R,
) -> Result<GridPath> {
    Ok(simulate_limit_free(spec, rng)?.reflect())
}

/// First grid time at which the free limit is at or below 0, or `None` if it
/// stays positive up to the horizon. Draws the same increments as
/// [`simulate_limit_free`] and stops at the hit.
pub fn busy_period<R: Rng + ?Sized>(spec: &LimitSpec, rng: &mut R) -> Result<Option<f64>> {
    Ok(LimitWalk::new(spec, rng)?
        .find(|&(_, v)| v <= 0.0)
        .map(|(t, _)| t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::SeedSpec;

    fn deterministic(q0: f64, lambda: f64) -> LimitSpec {
        LimitSpec::new(1.5, q0, lambda, 0.0, 2.0, 0.01).unwrap()
    }

    #[test]
    fn s_alpha_values() {
        for alpha in [1.1, 1.5, 2.0] {
            assert_eq!(s_alpha(1.0, alpha).unwrap(), 1.0);
        }
        assert!((s_alpha(2.0, 1.5).unwrap() - 0.314_980).abs() < 1e-6);
        assert!((s_alpha(4.0, 2.0).unwrap() - 0.125).abs() < 1e-15);
        assert!(s_alpha(0.0, 1.5).is_err());
    }

    #[test]
    fn noise_scale_per_law() {
        let pareto = ServiceModel::new(1.5, 1.0).unwrap();
        assert_eq!(
            noise_scale(&pareto).unwrap(),
            pareto.fluctuation_scale().unwrap()
        );
        let expo = ServiceModel::new(2.0, 1.5).unwrap();
        assert!((noise_scale(&expo).unwrap() - expo.mean).abs() < 1e-12);
        let pareto2 = ServiceModel::with_law(2.0, 1.0, ServiceLaw::Pareto).unwrap();
        assert!(noise_scale(&pareto2).is_err());
        let spec = LimitSpec::from_service(&pareto, 0.5, 1.0, 1.0, 0.01).unwrap();
        assert!((spec.s_alpha - 3f64.powf(-5.0 / 3.0)).abs() < 1e-15);
        assert!((spec.lambda - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(LimitSpec::new(1.5, -0.1, 1.0, 1.0, 1.0, 0.01).is_err());
        assert!(LimitSpec::new(1.5, 0.1, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(LimitSpec::new(1.5, 0.1, 1.0, 1.0, 0.0, 0.01).is_err());
        assert!(LimitSpec::new(2.5, 0.1, 1.0, 1.0, 1.0, 0.01).is_err());
    }

    #[test]
    fn deterministic_parabola() {
        let mut rng = SeedSpec::new(1, 0).rng();
        let spec = deterministic(0.7, 1.3);
        let p = simulate_limit_free(&spec, &mut rng).unwrap();
        assert_eq!(p.steps(), 200);
        assert_eq!(p.values()[0], 0.7);
        for k in 0..=p.steps() {
            let t = p.time(k);
            assert!((p.values()[k] - (0.7 - 0.5 * 1.69 * t * t)).abs() < 1e-14);
        }
    }

    #[test]
    fn deterministic_hitting_time() {
        let mut rng = SeedSpec::new(1, 0).rng();
        let spec = deterministic(1.0, 2f64.sqrt());
        let p = simulate_limit_free(&spec, &mut rng).unwrap();
        let hit = p.hitting_time(0.0).unwrap();
        assert!((hit - 1.0).abs() <= spec.dt);
        let h = busy_period(&spec, &mut rng).unwrap().unwrap();
        assert!((h - 1.0).abs() <= spec.dt);
        assert_eq!(
            busy_period(&deterministic(0.0, 1.0), &mut rng).unwrap(),
            Some(0.0)
        );
    }

    #[test]
    fn deterministic_reflection() {
        let mut rng = SeedSpec::new(1, 0).rng();
        let zero = simulate_limit_reflected(&deterministic(0.0, 1.0), &mut rng).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        let spec = deterministic(1.0, 1.0);
        let phi = simulate_limit_reflected(&spec, &mut rng).unwrap();
        let root = 2f64.sqrt();
        for k in 0..=phi.steps() {
            let t = phi.time(k);
            let want = if t < root { 1.0 - 0.5 * t * t } else { 0.0 };
            assert!((phi.values()[k] - want).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn streaming_busy_period_matches_full_path() {
        let spec = LimitSpec::new(1.5, 0.1, 1.0, 1.0, 3.0, 1e-3).unwrap();
        for rep in 0..200 {
            let seed = SeedSpec::new(11, rep);
            let full = simulate_limit_free(&spec, &mut seed.rng()).unwrap();
            let h = busy_period(&spec, &mut seed.rng()).unwrap();
            assert_eq!(h, full.hitting_time(0.0));
            let phi = simulate_limit_reflected(&spec, &mut seed.rng()).unwrap();
            assert_eq!(phi, full.reflect());
            assert!(phi.values().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn busy_period_monotone_in_initial_value() {
        for rep in 0..200 {
            let seed = SeedSpec::new(12, rep);
            let mut last = 0.0;
            for q0 in [0.05, 0.1, 0.2, 0.4] {
                let spec = LimitSpec::new(1.5, q0, 1.0, 1.0, 5.0, 1e-3).unwrap();
                let h = busy_period(&spec, &mut seed.rng())
                    .unwrap()
                    .unwrap_or(f64::INFINITY);
                assert!(h >= last);
                last = h;
            }
        }
    }
}
