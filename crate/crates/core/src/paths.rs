//! Càdlàg paths and the reflection map.
//!
//! [`StepPath`] holds a prelimit process observed at its event times. Besides
//! the value right after each event it records the left limit just before it,
//! so processes that drift between events (the free process during idle
//! periods, the net input) keep their running infimum exact. Evaluation is
//! right-continuous and piecewise constant: between events the path reports
//! the value of the last event.
//!
//! [`GridPath`] is a path sampled on a uniform grid, used for the limit
//! processes.
//!
//! The regulator is `psi(f)(t) = -inf_{s <= t} min(f(s), 0)` and the reflection
//! is `phi(f) = f + psi(f)`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-continuous path with jumps at `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStepPath")]
pub struct StepPath {
    initial_value: f64,
    times: Vec<f64>,
    left_limits: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

#[derive(Deserialize)]
struct RawStepPath {
    initial_value: f64,
    times: Vec<f64>,
    left_limits: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
}

impl TryFrom<RawStepPath> for StepPath {
    type Error = Error;

    fn try_from(raw: RawStepPath) -> Result<Self> {
        StepPath::with_left_limits(
            raw.initial_value,
            raw.times,
            raw.left_limits,
            raw.values,
            raw.horizon,
        )
    }
}

impl StepPath {
    /// Piecewise-constant path: the left limit at each event is the previous
    /// value.
    pub fn new(
        initial_value: f64,
        times: Vec<f64>,
        values: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        let mut left_limits = Vec::with_capacity(values.len());
        let mut prev = initial_value;
        for &v in &values {
            left_limits.push(prev);
            prev = v;
        }
        Self::with_left_limits(initial_value, times, left_limits, values, horizon)
    }

    pub fn with_left_limits(
        initial_value: f64,
        times: Vec<f64>,
        left_limits: Vec<f64>,
        values: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        if times.len() != values.len() || times.len() != left_limits.len() {
            return Err(Error::InvalidPath(format!(
                "length mismatch: {} times, {} left limits, {} values",
                times.len(),
                left_limits.len(),
                values.len()
            )));
        }
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::InvalidPath(format!(
                "horizon must be finite and >= 0, got {horizon}"
            )));
        }
        let mut prev = 0.0;
        for &t in &times {
            if !(t.is_finite() && t > prev) {
                return Err(Error::InvalidPath(format!(
                    "event times must be positive and strictly increasing ({t} after {prev})"
                )));
            }
            prev = t;
        }
        if prev > horizon {
            return Err(Error::InvalidPath(format!(
                "event at {prev} beyond horizon {horizon}"
            )));
        }
        let all_finite = initial_value.is_finite()
            && values.iter().all(|v| v.is_finite())
            && left_limits.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidPath("non-finite path value".into()));
        }
        Ok(Self {
            initial_value,
            times,
            left_limits,
            values,
            horizon,
        })
    }

    pub fn constant(value: f64, horizon: f64) -> Result<Self> {
        Self::new(value, Vec::new(), Vec::new(), horizon)
    }

    /// Builds a path without validation; callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(
        initial_value: f64,
        times: Vec<f64>,
        left_limits: Vec<f64>,
        values: Vec<f64>,
        horizon: f64,
    ) -> Self {
        debug_assert!(Self::with_left_limits(
            initial_value,
            times.clone(),
            left_limits.clone(),
            values.clone(),
            horizon
        )
        .is_ok());
        Self {
            initial_value,
            times,
            left_limits,
            values,
            horizon,
        }
    }

    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_limits(&self) -> &[f64] {
        &self.left_limits
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value at `t` (right-continuous).
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            self.initial_value
        } else {
            self.values[k - 1]
        }
    }

    /// Value just before `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k < self.times.len() && self.times[k] == t {
            self.left_limits[k]
        } else if k == 0 {
            self.initial_value
        } else {
            self.values[k - 1]
        }
    }

    /// Final value on `[0, horizon]`.
    pub fn last_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.initial_value)
    }

    /// Restriction to `[0, end]`.
    pub fn truncate(&self, end: f64) -> Self {
        let end = end.min(self.horizon).max(0.0);
        let k = self.times.partition_point(|&s| s <= end);
        Self {
            initial_value: self.initial_value,
            times: self.times[..k].to_vec(),
            left_limits: self.left_limits[..k].to_vec(),
            values: self.values[..k].to_vec(),
            horizon: end,
        }
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            initial_value: f(self.initial_value),
            times: self.times.clone(),
            left_limits: self.left_limits.iter().map(|&v| f(v)).collect(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            horizon: self.horizon,
        }
    }

    /// `a * self + b * other` on the union of both event grids, over the
    /// shorter of the two horizons.
    pub fn linear_combination(&self, a: f64, other: &StepPath, b: f64) -> Self {
        let horizon = self.horizon.min(other.horizon);
        let mut times: Vec<f64> = self
            .times
            .iter()
            .chain(other.times.iter())
            .copied()
            .filter(|&t| t <= horizon)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let left_limits = times
            .iter()
            .map(|&t| a * self.eval_left(t) + b * other.eval_left(t))
            .collect();
        let values = times
            .iter()
            .map(|&t| a * self.eval(t) + b * other.eval(t))
            .collect();
        Self {
            initial_value: a * self.initial_value + b * other.initial_value,
            times,
            left_limits,
            values,
            horizon,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "value"])?;
        w.write_record([fmt_f64(0.0), fmt_f64(self.initial_value)])?;
        let mut prev = self.initial_value;
        for ((&t, &left), &v) in self.times.iter().zip(&self.left_limits).zip(&self.values) {
            if left.to_bits() != prev.to_bits() {
                w.write_record([fmt_f64(t), fmt_f64(left)])?;
            }
            w.write_record([fmt_f64(t), fmt_f64(v)])?;
            prev = v;
        }
        w.write_record([fmt_f64(self.horizon), fmt_f64(self.last_value())])?;
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`StepPath::write_csv`]: the first row is the initial value,
    /// the last row marks the horizon, and two consecutive rows with the same
    /// time carry a left limit followed by the value.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let rows = read_rows(reader)?;
        if rows.len() < 2 {
            return Err(Error::InvalidPath(
                "step path csv needs at least two rows".into(),
            ));
        }
        let (horizon, _) = rows[rows.len() - 1];
        let body = &rows[..rows.len() - 1];
        let initial_value = body[0].1;
        let mut prev = initial_value;
        let (mut times, mut left_limits, mut values) = (Vec::new(), Vec::new(), Vec::new());
        let mut i = 1;
        while i < body.len() {
            let (t, v) = body[i];
            if i + 1 < body.len() && body[i + 1].0 == t {
                times.push(t);
                left_limits.push(v);
                values.push(body[i + 1].1);
                i += 2;
            } else {
                times.push(t);
                left_limits.push(prev);
                values.push(v);
                i += 1;
            }
            prev = *values.last().unwrap();
        }
        Self::with_left_limits(initial_value, times, left_limits, values, horizon)
    }
}

/// Uniformly sampled path on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    dt: f64,
    horizon: f64,
    values: Vec<f64>,
}

impl GridPath {
    /// `values[k]` is the value at `k * dt` with `dt = horizon / (values.len() - 1)`.
    pub fn new(horizon: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidPath(
                "grid path needs at least two points".into(),
            ));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidPath(format!(
                "grid horizon must be positive, got {horizon}"
            )));
        }
        let steps = values.len() - 1;
        Ok(Self {
            dt: horizon / steps as f64,
            horizon,
            values,
        })
    }

    pub fn from_fn(horizon: f64, steps: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidPath(
                "grid path needs at least one step".into(),
            ));
        }
        let dt = horizon / steps as f64;
        let values = (0..=steps)
            .map(|k| f(if k == steps { horizon } else { k as f64 * dt }))
            .collect();
        Self::new(horizon, values)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps() {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }

    /// Value at the last grid point at or before `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let k = ((t / self.dt).floor().max(0.0) as usize).min(self.steps());
        // Guard against `t` sitting one ulp below a grid point.
        let k = if k < self.steps() && self.time(k + 1) <= t {
            k + 1
        } else {
            k
        };
        self.values[k]
    }

    /// Restriction to the first `steps + 1` grid points.
    pub fn truncate_steps(&self, steps: usize) -> Self {
        let steps = steps.min(self.steps()).max(1);
        Self {
            dt: self.dt,
            horizon: self.time(steps),
            values: self.values[..=steps].to_vec(),
        }
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dt: self.dt,
            horizon: self.horizon,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "value"])?;
        for (k, &v) in self.values.iter().enumerate() {
            w.write_record([fmt_f64(self.time(k)), fmt_f64(v)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let rows = read_rows(reader)?;
        let horizon = rows.last().map(|r| r.0).unwrap_or(0.0);
        Self::new(horizon, rows.into_iter().map(|r| r.1).collect())
    }
}

/// Maximal interval on which the reflected path is strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub start: f64,
    pub end: f64,
    pub height: f64,
    /// The excursion is still running at the horizon.
    pub censored: bool,
}

impl Excursion {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Reflection-map operations shared by step and grid paths.
pub trait Reflection: Sized {
    /// `psi(f)`: non-negative, non-decreasing.
    fn regulator(&self) -> Self;

    /// `phi(f) = f + psi(f)`.
    fn reflect(&self) -> Self;

    /// First time the path is at or below `level`.
    ///
    /// Grid paths report the first grid point satisfying the condition, which
    /// is never earlier than a downward crossing of the underlying path and
    /// later by less than `dt`. Step paths check the left limit and the value
    /// at each event and report the event time.
    fn hitting_time(&self, level: f64) -> Option<f64>;

    /// Excursions of `phi(f)` above zero, in time order.
    fn excursions(&self) -> Vec<Excursion>;
}

#[inline]
fn neg_part(x: f64) -> f64 {
    x.min(0.0)
}

impl Reflection for StepPath {
    fn regulator(&self) -> Self {
        let mut running = neg_part(self.initial_value);
        let initial_value = -running;
        let mut left_limits = Vec::with_capacity(self.len());
        let mut values = Vec::with_capacity(self.len());
        for (&left, &v) in self.left_limits.iter().zip(&self.values) {
            running = running.min(neg_part(left));
            left_limits.push(-running);
            running = running.min(neg_part(v));
            values.push(-running);
        }
        Self {
            initial_value,
            times: self.times.clone(),
            left_limits,
            values,
            horizon: self.horizon,
        }
    }

    fn reflect(&self) -> Self {
        let reg = self.regulator();
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        Self {
            initial_value: self.initial_value + reg.initial_value,
            times: self.times.clone(),
            left_limits: add(&self.left_limits, &reg.left_limits),
            values: add(&self.values, &reg.values),
            horizon: self.horizon,
        }
    }

    fn hitting_time(&self, level: f64) -> Option<f64> {
        if self.initial_value <= level {
            return Some(0.0);
        }
        self.times
            .iter()
            .zip(self.left_limits.iter().zip(&self.values))
            .find(|(_, (&left, &v))| left <= level || v <= level)
            .map(|(&t, _)| t)
    }

    fn excursions(&self) -> Vec<Excursion> {
        let phi = self.reflect();
        // Piece k covers [start_k, start_{k+1}) with value value_k.
        let starts = std::iter::once(0.0).chain(phi.times.iter().copied());
        let vals = std::iter::once(phi.initial_value).chain(phi.values.iter().copied());
        let lefts = std::iter::once(0.0).chain(phi.left_limits.iter().copied());
        let mut out = Vec::new();
        let mut open: Option<(f64, f64)> = None;
        for ((start, v), left) in starts.zip(vals).zip(lefts) {
            if let Some((_, h)) = open.as_mut() {
                *h = h.max(left);
            }
            if v > 0.0 {
                match open.as_mut() {
                    Some((_, h)) => *h = h.max(v),
                    None => open = Some((start, v)),
                }
            } else if let Some((s, h)) = open.take() {
                out.push(Excursion {
                    start: s,
                    end: start,
                    height: h,
                    censored: false,
                });
            }
        }
        if let Some((s, h)) = open {
            if s < self.horizon {
                out.push(Excursion {
                    start: s,
                    end: self.horizon,
                    height: h,
                    censored: true,
                });
            }
        }
        out
    }
}

impl Reflection for GridPath {
    fn regulator(&self) -> Self {
        let mut running = 0.0f64;
        let values = self
            .values
            .iter()
            .map(|&v| {
                running = running.min(v);
                -running
            })
            .collect();
        Self {
            dt: self.dt,
            horizon: self.horizon,
            values,
        }
    }

    fn reflect(&self) -> Self {
        let reg = self.regulator();
        Self {
            dt: self.dt,
            horizon: self.horizon,
            values: self
                .values
                .iter()
                .zip(&reg.values)
                .map(|(f, r)| f + r)
                .collect(),
        }
    }

    fn hitting_time(&self, level: f64) -> Option<f64> {
        self.values
            .iter()
            .position(|&v| v <= level)
            .map(|k| self.time(k))
    }

    /// Cells `[k dt, (k+1) dt)` carry the value at their left grid point.
    fn excursions(&self) -> Vec<Excursion> {
        let phi = self.reflect();
        let cells = self.steps();
        let mut out = Vec::new();
        let mut open: Option<(usize, f64)> = None;
        for k in 0..cells {
            let v = phi.values[k];
            if v > 0.0 {
                match open.as_mut() {
                    Some((_, h)) => *h = h.max(v),
                    None => open = Some((k, v)),
                }
            } else if let Some((s, h)) = open.take() {
                out.push(Excursion {
                    start: self.time(s),
                    end: self.time(k),
                    height: h,
                    censored: false,
                });
            }
        }
        if let Some((s, h)) = open {
            out.push(Excursion {
                start: self.time(s),
                end: self.horizon,
                height: h.max(phi.values[cells]),
                censored: true,
            });
        }
        out
    }
}

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn read_rows<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
        return Err(Error::InvalidPath(format!(
            "expected header `t,value`, got {headers:?}"
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidPath(format!("bad number `{s}`: {e}")))
        };
        rows.push((parse(&rec[0])?, parse(&rec[1])?));
    }
    Ok(rows)
}
