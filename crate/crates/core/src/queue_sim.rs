//! Event-driven simulation of the transitory single-server queue.
//!
//! `n` customers each join once, at independent exponential clock times, and
//! are served first-come-first-served by one server. `backlog` customers are
//! already waiting at time zero. Events are arrivals and service completions;
//! simultaneous events (only possible with hand-made inputs) are processed
//! arrivals first and recorded as a single path point.
//!
//! Arrival times, backlog services and arriving customers' services come
//! from three generator streams split off the caller's generator. With the
//! same seed, every customer keeps its service time whatever the backlog or
//! horizon, and a larger backlog only appends customers at time zero.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::distributions::{exp_from_uniform, uniform_open, ServiceModel, SimRng};
use crate::error::{invalid, Result};
use crate::paths::StepPath;
use crate::scaling::ScalingConstants;

/// Order statistics of `n` i.i.d. `Exp(rate)` clocks, generated in increasing
/// order from the spacings `E_j / (rate * (n - j + 1))`.
#[derive(Debug, Clone)]
pub struct OrderStatArrivals<R> {
    n: u64,
    rate: f64,
    emitted: u64,
    time: f64,
    rng: R,
}

impl<R: Rng> OrderStatArrivals<R> {
    pub fn new(n: u64, rate: f64, rng: R) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "need at least one customer"));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid("rate", format!("must be positive, got {rate}")));
        }
        Ok(Self {
            n,
            rate,
            emitted: 0,
            time: 0.0,
            rng,
        })
    }
}

impl<R: Rng> Iterator for OrderStatArrivals<R> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.emitted == self.n {
            return None;
        }
        let remaining = (self.n - self.emitted) as f64;
        self.time += exp_from_uniform(self.rate * remaining, uniform_open(&mut self.rng));
        self.emitted += 1;
        Some(self.time)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.n - self.emitted) as usize;
        (left, Some(left))
    }
}

/// All `n` arrival times in increasing order.
pub fn generate_arrivals<R: Rng + ?Sized>(n: u64, rate: f64, rng: &mut R) -> Result<Vec<f64>> {
    Ok(OrderStatArrivals::new(n, rate, rng)?.collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueSpec {
    pub n: u64,
    /// Rate of each customer's exponential clock.
    pub arrival_rate: f64,
    pub model: ServiceModel,
    pub backlog: u64,
    /// Unscaled time horizon.
    pub horizon: f64,
}

impl QueueSpec {
    pub fn new(
        n: u64,
        arrival_rate: f64,
        model: ServiceModel,
        backlog: u64,
        horizon: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "need at least one customer"));
        }
        if !(arrival_rate > 0.0 && arrival_rate.is_finite()) {
            return Err(invalid(
                "arrival_rate",
                format!("must be positive, got {arrival_rate}"),
            ));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(
                "horizon",
                format!("must be positive, got {horizon}"),
            ));
        }
        Ok(Self {
            n,
            arrival_rate,
            model,
            backlog,
            horizon,
        })
    }

    /// Critically loaded queue in heavy-traffic scaling: the pool as a whole
    /// starts arriving at rate `lambda = 1 / E[S]` (each clock has rate
    /// `lambda / n`), the backlog is `ceil(q0 n^(1/(2 alpha - 1)) / ell2)` and
    /// the horizon is `horizon_scaled * tau_n(1)`.
    pub fn heavy_traffic(
        model: ServiceModel,
        constants: &ScalingConstants,
        q0: f64,
        horizon_scaled: f64,
    ) -> Result<Self> {
        if !(q0 >= 0.0 && q0.is_finite()) {
            return Err(invalid("q0", format!("must be non-negative, got {q0}")));
        }
        if !(horizon_scaled > 0.0 && horizon_scaled.is_finite()) {
            return Err(invalid(
                "T",
                format!("horizon must be positive, got {horizon_scaled}"),
            ));
        }
        let n = constants.n;
        Self::new(
            n,
            model.lambda / n as f64,
            model,
            constants.initial_backlog(q0),
            constants.unscaled_time(horizon_scaled),
        )
    }
}

/// Everything that happened at one event time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventStep {
    pub time: f64,
    pub queue_before: u64,
    pub queue_after: u64,
    pub work_before: f64,
    pub work_after: f64,
    pub arrived: u64,
    pub departed: u64,
    pub idle: f64,
}

/// FCFS single-server dynamics driven by explicit arrival and service inputs.
pub struct Engine<A: Iterator<Item = f64>, S: FnMut() -> f64> {
    arrivals: std::iter::Peekable<A>,
    draw_service: S,
    in_system: VecDeque<f64>,
    services: Vec<f64>,
    time: f64,
    queue: u64,
    idle: f64,
    work: f64,
    arrived: u64,
    departed: u64,
    next_departure: f64,
}

impl<A: Iterator<Item = f64>, S: FnMut() -> f64> Engine<A, S> {
    /// `draw_service` is called once per arrival, in arrival order.
    pub fn new(arrivals: A, draw_service: S, backlog: impl IntoIterator<Item = f64>) -> Self {
        let mut in_system = VecDeque::new();
        let mut services = Vec::new();
        let mut work = 0.0;
        for s in backlog {
            in_system.push_back(s);
            services.push(s);
            work += s;
        }
        let next_departure = in_system.front().copied().unwrap_or(f64::INFINITY);
        let queue = services.len() as u64;
        Self {
            arrivals: arrivals.peekable(),
            draw_service,
            in_system,
            services,
            time: 0.0,
            queue,
            idle: 0.0,
            work,
            arrived: 0,
            departed: 0,
            next_departure,
        }
    }

    pub fn queue(&self) -> u64 {
        self.queue
    }

    pub fn work(&self) -> f64 {
        self.work
    }

    pub fn next_event_time(&mut self) -> f64 {
        let a = self.arrivals.peek().copied().unwrap_or(f64::INFINITY);
        a.min(self.next_departure)
    }

    /// Processes every event at the next event time, if it is `<= until`.
    pub fn step(&mut self, until: f64) -> Option<EventStep> {
        let t = self.next_event_time();
        if t.is_nan() || t > until {
            return None;
        }
        if self.queue == 0 {
            self.idle += t - self.time;
        }
        self.time = t;
        let queue_before = self.queue;
        let work_before = self.work;
        while self.arrivals.peek() == Some(&t) {
            self.arrivals.next();
            let s = (self.draw_service)();
            self.in_system.push_back(s);
            self.services.push(s);
            self.work += s;
            self.arrived += 1;
            self.queue += 1;
            if self.queue == 1 {
                self.next_departure = t + s;
            }
        }
        if self.next_departure == t {
            self.queue -= 1;
            self.departed += 1;
            self.in_system.pop_front();
            self.next_departure = match self.in_system.front() {
                Some(&s) => t + s,
                None => f64::INFINITY,
            };
        }
        Some(EventStep {
            time: t,
            queue_before,
            queue_after: self.queue,
            work_before,
            work_after: self.work,
            arrived: self.arrived,
            departed: self.departed,
            idle: self.idle,
        })
    }

    /// Idle time accumulated up to `t`, which must not precede the last event.
    pub fn idle_at(&self, t: f64) -> f64 {
        if self.queue == 0 {
            self.idle + (t - self.time)
        } else {
            self.idle
        }
    }

    pub fn into_services(self) -> Vec<f64> {
        self.services
    }
}

fn split_streams<R: RngCore + ?Sized>(rng: &mut R) -> [SimRng; 3] {
    [(); 3].map(|_| SimRng::seed_from_u64(rng.next_u64()))
}

fn engine_for<R: RngCore + ?Sized>(
    spec: &QueueSpec,
    rng: &mut R,
) -> Result<Engine<OrderStatArrivals<SimRng>, impl FnMut() -> f64>> {
    let [arr_rng, mut backlog_rng, mut svc_rng] = split_streams(rng);
    let arrivals = OrderStatArrivals::new(spec.n, spec.arrival_rate, arr_rng)?;
    let model = spec.model;
    let backlog: Vec<f64> = (0..spec.backlog)
        .map(|_| model.sample(&mut backlog_rng))
        .collect();
    Ok(Engine::new(
        arrivals,
        move || model.sample(&mut svc_rng),
        backlog,
    ))
}

/// One simulated queue on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueRun {
    pub spec: QueueSpec,
    /// Arrival times up to the horizon.
    pub arrivals: Vec<f64>,
    /// Service durations in service order (backlog first).
    pub services: Vec<f64>,
    /// `Q(t)`, the number of customers in the system.
    pub queue: StepPath,
    /// `A(t)`.
    pub arrival_count: StepPath,
    /// `B(t) = t - I(t)`.
    pub busy: StepPath,
    /// `I(t)`.
    pub idle: StepPath,
    /// `X(t)`: work brought in by time `t` (backlog included) minus `t`.
    pub net_input: StepPath,
    pub departures: u64,
}

impl QueueRun {
    pub fn event_count(&self) -> usize {
        self.arrivals.len() + self.departures as usize
    }

    pub fn busy_fraction(&self) -> f64 {
        self.busy.last_value() / self.spec.horizon
    }

    pub fn write_exports(
        &self,
        dir: &Path,
        mean: f64,
        idle_refinement: usize,
    ) -> Result<Vec<String>> {
        let files: [(&str, StepPath); 6] = [
            ("queue.csv", self.queue.clone()),
            ("free.csv", free_process(self, mean, idle_refinement)),
            ("net_input.csv", self.net_input.clone()),
            ("busy.csv", self.busy.clone()),
            ("idle.csv", self.idle.clone()),
            ("arrivals.csv", self.arrival_count.clone()),
        ];
        let mut names = Vec::new();
        for (name, path) in files {
            let f = std::fs::File::create(dir.join(name))?;
            let mut w = std::io::BufWriter::new(f);
            path.write_csv(&mut w)?;
            w.flush()?;
            names.push(name.to_string());
        }
        Ok(names)
    }
}

/// Simulates the queue on `[0, spec.horizon]` and records every process.
pub fn simulate_queue<R: RngCore + ?Sized>(spec: &QueueSpec, rng: &mut R) -> Result<QueueRun> {
    let mut engine = engine_for(spec, rng)?;
    let (recorded, departures) = record(spec, &mut engine);
    Ok(finish(spec, recorded, engine.into_services(), departures))
}

struct Recorded {
    times: Vec<f64>,
    q: (Vec<f64>, Vec<f64>),
    a: Vec<f64>,
    idle: Vec<f64>,
    x: (Vec<f64>, Vec<f64>),
    arrivals: Vec<f64>,
    initial_work: f64,
}

fn record<A, S>(spec: &QueueSpec, engine: &mut Engine<A, S>) -> (Recorded, u64)
where
    A: Iterator<Item = f64>,
    S: FnMut() -> f64,
{
    let mut r = Recorded {
        times: Vec::new(),
        q: (Vec::new(), Vec::new()),
        a: Vec::new(),
        idle: Vec::new(),
        x: (Vec::new(), Vec::new()),
        arrivals: Vec::new(),
        initial_work: engine.work(),
    };
    let mut departures = 0;
    let mut last_arrived = 0;
    while let Some(ev) = engine.step(spec.horizon) {
        r.times.push(ev.time);
        r.q.0.push(ev.queue_before as f64);
        r.q.1.push(ev.queue_after as f64);
        r.a.push(ev.arrived as f64);
        r.idle.push(ev.idle);
        r.x.0.push(ev.work_before - ev.time);
        r.x.1.push(ev.work_after - ev.time);
        for _ in last_arrived..ev.arrived {
            r.arrivals.push(ev.time);
        }
        last_arrived = ev.arrived;
        departures = ev.departed;
    }
    // Close the drifting processes at the horizon.
    if r.times.last().is_none_or(|&t| t < spec.horizon) {
        let t = spec.horizon;
        let q = engine.queue() as f64;
        r.times.push(t);
        r.q.0.push(q);
        r.q.1.push(q);
        r.a.push(last_arrived as f64);
        r.idle.push(engine.idle_at(t));
        let x = engine.work() - t;
        r.x.0.push(x);
        r.x.1.push(x);
    }
    (r, departures)
}

fn finish(spec: &QueueSpec, r: Recorded, services: Vec<f64>, departures: u64) -> QueueRun {
    let h = spec.horizon;
    let backlog = spec.backlog as f64;
    let busy: Vec<f64> = r.times.iter().zip(&r.idle).map(|(t, i)| t - i).collect();
    let queue = StepPath::from_parts_unchecked(backlog, r.times.clone(), r.q.0, r.q.1, h);
    let arrival_count = StepPath::new(0.0, r.times.clone(), r.a, h).expect("validated times");
    let idle = StepPath::from_parts_unchecked(0.0, r.times.clone(), r.idle.clone(), r.idle, h);
    let busy = StepPath::from_parts_unchecked(0.0, r.times.clone(), busy.clone(), busy, h);
    let net_input = StepPath::from_parts_unchecked(r.initial_work, r.times, r.x.0, r.x.1, h);
    QueueRun {
        spec: *spec,
        arrivals: r.arrivals,
        services,
        queue,
        arrival_count,
        busy,
        idle,
        net_input,
        departures,
    }
}

/// Statistics of one run that do not need the recorded paths.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueSummary {
    /// Queue length at each requested unscaled time.
    pub checkpoints: Vec<u64>,
    /// First time the queue is empty, if within the horizon.
    pub first_empty: Option<f64>,
    pub idle: f64,
    pub final_queue: u64,
    pub arrived: u64,
    pub departed: u64,
}

/// Runs the same dynamics as [`simulate_queue`] (same draws for the same
/// generator state) without recording paths. With `stop_when_empty` the run
/// ends at the first time the queue empties.
pub fn simulate_summary<R: RngCore + ?Sized>(
    spec: &QueueSpec,
    checkpoints: &[f64],
    stop_when_empty: bool,
    rng: &mut R,
) -> Result<QueueSummary> {
    debug_assert!(checkpoints.windows(2).all(|w| w[0] <= w[1]));
    let mut engine = engine_for(spec, rng)?;
    let mut out = QueueSummary {
        checkpoints: Vec::with_capacity(checkpoints.len()),
        first_empty: (spec.backlog == 0).then_some(0.0),
        idle: 0.0,
        final_queue: spec.backlog,
        arrived: 0,
        departed: 0,
    };
    let mut next_cp = 0;
    let mut last_time = 0.0;
    loop {
        let t_next = engine.next_event_time();
        while next_cp < checkpoints.len() && checkpoints[next_cp] < t_next {
            out.checkpoints.push(engine.queue());
            next_cp += 1;
        }
        if stop_when_empty && out.first_empty.is_some() {
            break;
        }
        let Some(ev) = engine.step(spec.horizon) else {
            break;
        };
        last_time = ev.time;
        out.arrived = ev.arrived;
        out.departed = ev.departed;
        if ev.queue_after == 0 && out.first_empty.is_none() {
            out.first_empty = Some(ev.time);
        }
    }
    while out.checkpoints.len() < checkpoints.len() {
        out.checkpoints.push(engine.queue());
    }
    out.final_queue = engine.queue();
    out.idle = if stop_when_empty && out.first_empty.is_some() {
        engine.idle_at(last_time)
    } else {
        engine.idle_at(spec.horizon)
    };
    Ok(out)
}

/// Free process `N(t) = Q(t) - I(t) / E[S]`: follows the queue while the
/// server works and decreases at rate `1 / E[S]` while it idles.
///
/// Sampled at every event time (left limit and value) and at
/// `idle_refinement` equally spaced interior points of each idle interval.
pub fn free_process(run: &QueueRun, mean: f64, idle_refinement: usize) -> StepPath {
    let q = &run.queue;
    let idle = run.idle.values();
    let n_events = q.len();
    let mut times = Vec::with_capacity(n_events);
    let mut lefts = Vec::with_capacity(n_events);
    let mut values = Vec::with_capacity(n_events);
    let initial = q.initial_value();
    let (mut prev_t, mut prev_q, mut prev_idle) = (0.0, initial, 0.0);
    for (k, &t) in q.times().iter().enumerate() {
        if prev_q == 0.0 && idle_refinement > 0 {
            let span = t - prev_t;
            for j in 1..=idle_refinement {
                let s = prev_t + span * j as f64 / (idle_refinement + 1) as f64;
                if s > prev_t && s < t {
                    let v = -(prev_idle + (s - prev_t)) / mean;
                    times.push(s);
                    lefts.push(v);
                    values.push(v);
                }
            }
        }
        let drift = idle[k] / mean;
        times.push(t);
        lefts.push(q.left_limits()[k] - drift);
        values.push(q.values()[k] - drift);
        prev_t = t;
        prev_q = q.values()[k];
        prev_idle = idle[k];
    }
    StepPath::from_parts_unchecked(initial, times, lefts, values, q.horizon())
}

/// `X(t)`; its regulator is the cumulative idle time.
pub fn net_input(run: &QueueRun) -> StepPath {
    run.net_input.clone()
}

/// Renewal count `sigma(b) = max{k : S_1 + ... + S_k <= b}`.
pub fn renewal_count(services: &[f64], b: f64) -> u64 {
    let mut sum = 0.0;
    let mut k = 0;
    for &s in services {
        sum += s;
        if sum > b {
            break;
        }
        k += 1;
    }
    k
}
