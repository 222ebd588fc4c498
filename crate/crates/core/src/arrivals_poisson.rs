//! Arrivals as a thinned, marked Poisson process.
//!
//! Poisson events at rate `rate * n` each carry a mark drawn uniformly from
//! the `n` customers; an event is an arrival only if its mark is new. Marks
//! are not stored: after `i - 1` events with `D(i - 1)` distinct marks seen,
//! event `i` repeats a mark with probability `D(i - 1) / n`, decided by a
//! uniform `U_i`.
//!
//! The repeat count after `k` events follows the recursion
//! `R(k) = sum_{i <= k} 1{U_i <= (i - 1 - R(i - 1)) / n}`, sandwiched between
//! `R_up`, which uses threshold `(i - 1) / n`, and `R_low`, which uses
//! `(i - 1 - R_up(i - 1)) / n`. An indicator fires iff its threshold is
//! positive and `U_i` is at most the threshold.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{exp_from_uniform, uniform_open};
use crate::error::{invalid, Result};
use crate::paths::{fmt_f64, StepPath};
use crate::scaling::ScalingConstants;

fn fires(u: f64, threshold: f64) -> bool {
    threshold > 0.0 && u <= threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoissonRun {
    pub n: u64,
    /// Per-customer rate; events occur at rate `rate * n`.
    pub rate: f64,
    pub horizon: f64,
    pub event_times: Vec<f64>,
    pub uniforms: Vec<f64>,
    /// Whether event `i` brought a new mark, i.e. was an arrival.
    pub accepted: Vec<bool>,
    /// Number of distinct marks after each event.
    pub distinct: Vec<u64>,
    /// `R(t)`, the number of repeated marks by time `t`.
    pub repeats: StepPath,
}

impl MarkedPoissonRun {
    /// `Pi(t)`.
    pub fn event_count(&self, t: f64) -> u64 {
        self.event_times.partition_point(|&s| s <= t) as u64
    }

    /// Arrivals by time `t`: `Pi(t) - R(t)`.
    pub fn accepted_count(&self, t: f64) -> u64 {
        let k = self.event_count(t) as usize;
        if k == 0 {
            0
        } else {
            self.distinct[k - 1]
        }
    }

    pub fn repeats_at(&self, t: f64) -> u64 {
        self.repeats.eval(t) as u64
    }

    /// Coupled bounds evaluated along this run's uniforms.
    pub fn bounds(&self) -> CoupledBounds {
        coupled_bounds(self.uniforms.len(), self.n, &self.uniforms)
            .expect("one uniform per event and n >= 1")
    }

    /// Writes `t,R,R_up,R_low` at time zero and at every event time.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let b = self.bounds();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "R", "R_up", "R_low"])?;
        w.write_record([fmt_f64(0.0).as_str(), "0", "0", "0"])?;
        for (i, &t) in self.event_times.iter().enumerate() {
            w.write_record([
                fmt_f64(t),
                b.exact[i + 1].to_string(),
                b.upper[i + 1].to_string(),
                b.lower[i + 1].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates the marked Poisson process on `[0, horizon]`.
pub fn simulate_marked_poisson<R: Rng + ?Sized>(
    n: u64,
    rate: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<MarkedPoissonRun> {
    if n == 0 {
        return Err(invalid("n", "need at least one customer"));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(invalid("rate", format!("must be positive, got {rate}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(
            "horizon",
            format!("must be positive, got {horizon}"),
        ));
    }
    let total_rate = rate * n as f64;
    let nf = n as f64;
    let mut run = MarkedPoissonRun {
        n,
        rate,
        horizon,
        event_times: Vec::new(),
        uniforms: Vec::new(),
        accepted: Vec::new(),
        distinct: Vec::new(),
        repeats: StepPath::constant(0.0, horizon)?,
    };
    let mut repeat_values = Vec::new();
    let (mut t, mut distinct, mut repeated) = (0.0, 0u64, 0u64);
    loop {
        t += exp_from_uniform(total_rate, uniform_open(rng));
        if t > horizon {
            break;
        }
        let u = uniform_open(rng);
        let repeat = fires(u, distinct as f64 / nf);
        if repeat {
            repeated += 1;
        } else {
            distinct += 1;
        }
        run.event_times.push(t);
        run.uniforms.push(u);
        run.accepted.push(!repeat);
        run.distinct.push(distinct);
        repeat_values.push(repeated as f64);
    }
    run.repeats = StepPath::new(0.0, run.event_times.clone(), repeat_values, horizon)?;
    Ok(run)
}

/// `R(0), ..., R(k)` from the recursion driven by `uniforms[..k]`.
pub fn recursive_repeats(k: usize, n: u64, uniforms: &[f64]) -> Result<Vec<u64>> {
    check_inputs(k, n, uniforms)?;
    let nf = n as f64;
    let mut r = Vec::with_capacity(k + 1);
    r.push(0u64);
    for (i, &u) in uniforms[..k].iter().enumerate() {
        let prev = r[i];
        let threshold = (i as u64 - prev) as f64 / nf;
        r.push(prev + fires(u, threshold) as u64);
    }
    Ok(r)
}

/// The exact recursion together with its pathwise lower and upper bounds,
/// each of length `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoupledBounds {
    pub lower: Vec<u64>,
    pub exact: Vec<u64>,
    pub upper: Vec<u64>,
}

pub fn coupled_bounds(k: usize, n: u64, uniforms: &[f64]) -> Result<CoupledBounds> {
    let exact = recursive_repeats(k, n, uniforms)?;
    let nf = n as f64;
    let mut upper = Vec::with_capacity(k + 1);
    let mut lower = Vec::with_capacity(k + 1);
    upper.push(0u64);
    lower.push(0u64);
    for (i, &u) in uniforms[..k].iter().enumerate() {
        let up_prev = upper[i];
        upper.push(up_prev + fires(u, i as f64 / nf) as u64);
        let low_threshold = (i as f64 - up_prev as f64) / nf;
        lower.push(lower[i] + fires(u, low_threshold) as u64);
    }
    Ok(CoupledBounds {
        lower,
        exact,
        upper,
    })
}

fn check_inputs(k: usize, n: u64, uniforms: &[f64]) -> Result<()> {
    if n == 0 {
        return Err(invalid("n", "need at least one customer"));
    }
    if k > uniforms.len() {
        return Err(invalid(
            "k",
            format!(
                "{k} steps requested but only {} uniforms given",
                uniforms.len()
            ),
        ));
    }
    Ok(())
}

/// `sup_{t <= horizon} |s_n * counts(tau_n(t)) - lambda^2 t^2 / 2|` for a
/// counting path given by its jump times (unscaled) and post-jump values.
///
/// The parabola is monotone, so on each constant piece the supremum is
/// attained at one of the piece's endpoints and the result is exact.
pub fn drift_sup_statistic(
    jump_times: &[f64],
    counts: &[u64],
    c: &ScalingConstants,
    lambda: f64,
    horizon: f64,
) -> f64 {
    debug_assert_eq!(jump_times.len(), counts.len());
    let drift = |t: f64| 0.5 * lambda * lambda * t * t;
    let mut sup: f64 = 0.0;
    let mut level = 0.0;
    let mut start = 0.0;
    for (&t, &count) in jump_times.iter().zip(counts) {
        let s = t / c.time_factor;
        if s > horizon {
            break;
        }
        sup = sup
            .max((level - drift(start)).abs())
            .max((level - drift(s)).abs());
        level = c.space_factor * count as f64;
        start = s;
    }
    sup.max((level - drift(start)).abs())
        .max((level - drift(horizon)).abs())
}

/// Jump times of a bound sequence along the run's event times (only the
/// events where the sequence increases).
pub fn jumps(event_times: &[f64], sequence: &[u64]) -> (Vec<f64>, Vec<u64>) {
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, &t) in event_times.iter().enumerate() {
        if sequence[i + 1] != sequence[i] {
            times.push(t);
            values.push(sequence[i + 1]);
        }
    }
    (times, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::SeedSpec;

    #[test]
    fn single_customer_accepts_only_first_event() {
        let mut rng = SeedSpec::new(1, 0).rng();
        let run = simulate_marked_poisson(1, 1.0, 50.0, &mut rng).unwrap();
        assert!(run.event_times.len() > 5);
        assert!(run.accepted[0]);
        assert!(run.accepted[1..].iter().all(|&a| !a));
        assert_eq!(run.accepted_count(50.0), 1);
        assert_eq!(run.repeats_at(50.0), run.event_times.len() as u64 - 1);
    }

    #[test]
    fn distinct_plus_repeats_counts_events() {
        let mut rng = SeedSpec::new(2, 0).rng();
        let run = simulate_marked_poisson(30, 0.2, 40.0, &mut rng).unwrap();
        for (i, &t) in run.event_times.iter().enumerate() {
            assert_eq!(run.distinct[i] + run.repeats_at(t), i as u64 + 1);
            assert!(run.distinct[i] <= 30);
        }
        let r = recursive_repeats(run.uniforms.len(), 30, &run.uniforms).unwrap();
        for (i, &d) in run.distinct.iter().enumerate() {
            assert_eq!(d, i as u64 + 1 - r[i + 1]);
        }
    }

    #[test]
    fn recursion_fixtures() {
        assert_eq!(recursive_repeats(4, 5, &[1.0; 4]).unwrap(), vec![0; 5]);
        // Thresholds 0, 1/5, 1/5: the first never fires, the next two do.
        assert_eq!(
            recursive_repeats(3, 5, &[0.0; 3]).unwrap(),
            vec![0, 0, 1, 2]
        );
        assert!(recursive_repeats(4, 5, &[0.5; 3]).is_err());
        assert!(recursive_repeats(1, 0, &[0.5]).is_err());
    }

    #[test]
    fn bounds_trivial_cases() {
        for k in 0..=1 {
            let b = coupled_bounds(k, 7, &[0.0]).unwrap();
            assert!(b
                .lower
                .iter()
                .chain(&b.exact)
                .chain(&b.upper)
                .all(|&v| v == 0));
        }
        // Thresholds stay below 1 while k <= n, so U = 1 never fires.
        let b = coupled_bounds(10, 10, &[1.0; 10]).unwrap();
        assert!(b
            .lower
            .iter()
            .chain(&b.exact)
            .chain(&b.upper)
            .all(|&v| v == 0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = SeedSpec::new(1, 0).rng();
        assert!(simulate_marked_poisson(0, 1.0, 1.0, &mut rng).is_err());
        assert!(simulate_marked_poisson(1, 0.0, 1.0, &mut rng).is_err());
        assert!(simulate_marked_poisson(1, 1.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn drift_statistic_of_exact_parabola_steps() {
        let c = ScalingConstants::new(1, 1.5, 1.0).unwrap();
        // No jumps: the supremum is the parabola at the horizon.
        assert_eq!(
            drift_sup_statistic(&[], &[], &c, 2.0, 1.5),
            0.5 * 4.0 * 2.25
        );
        // One jump to 1 at t = 1 with lambda = sqrt 2: distance is 1 just
        // before the jump and 0 right after it, then grows to 3 at t = 2.
        let sup = drift_sup_statistic(&[1.0], &[1], &c, 2f64.sqrt(), 2.0);
        assert!((sup - 3.0).abs() < 1e-12);
        let sup = drift_sup_statistic(&[1.0], &[1], &c, 2f64.sqrt(), 1.0);
        assert!((sup - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_csv_has_row_per_event() {
        let mut rng = SeedSpec::new(5, 0).rng();
        let run = simulate_marked_poisson(20, 0.5, 10.0, &mut rng).unwrap();
        let mut buf = Vec::new();
        run.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), run.event_times.len() + 2);
        assert!(text.starts_with("t,R,R_up,R_low\n"));
    }
}
