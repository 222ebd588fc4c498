use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

use stablequeue::arrivals_poisson::{recursive_repeats, simulate_marked_poisson};
use stablequeue::distributions::{uniform_open, SeedSpec};
use stablequeue::stats::{ks_discrete, ks_two_sample};

const REPS: u64 = 100_000;

#[test]
fn accepted_count_is_binomial() {
    let (n, rate) = (100u64, 1.0);
    for t in [0.5, 1.0, 2.0] {
        let counts: Vec<u64> = (0..REPS)
            .into_par_iter()
            .map(|rep| {
                let run =
                    simulate_marked_poisson(n, rate, t, &mut SeedSpec::new(11, rep).rng()).unwrap();
                run.accepted_count(t)
            })
            .collect();
        let binomial = Binomial::new(1.0 - (-rate * t).exp(), n).unwrap();
        let ks = ks_discrete(&counts, |k| binomial.cdf(k), n)
            .unwrap()
            .statistic;
        assert!(ks < 0.01, "t = {t}: KS {ks}");
    }
}

/// Poisson events that each ring a uniformly chosen one of `n` clocks; an
/// event is a repeat when its clock has rung before.
fn explicit_marks_repeats<R: Rng>(n: u64, rate: f64, t: f64, rng: &mut R) -> u64 {
    let events = Poisson::new(rate * n as f64 * t).unwrap().sample(rng) as u64;
    let mut seen = vec![false; n as usize];
    let mut repeats = 0;
    for _ in 0..events {
        let label = rng.random_range(0..n as usize);
        if seen[label] {
            repeats += 1;
        }
        seen[label] = true;
    }
    repeats
}

#[test]
fn recursion_at_poisson_time_matches_explicit_marks() {
    let (n, rate, t) = (100u64, 1.0, 1.0);
    let direct: Vec<f64> = (0..REPS)
        .into_par_iter()
        .map(|rep| explicit_marks_repeats(n, rate, t, &mut SeedSpec::new(12, rep).rng()) as f64)
        .collect();
    let composed: Vec<f64> = (0..REPS)
        .into_par_iter()
        .map(|rep| {
            let mut rng = SeedSpec::new(13, rep).rng();
            let k = Poisson::new(rate * n as f64 * t).unwrap().sample(&mut rng) as usize;
            let u: Vec<f64> = (0..k).map(|_| uniform_open(&mut rng)).collect();
            recursive_repeats(k, n, &u).unwrap()[k] as f64
        })
        .collect();
    let ks = ks_two_sample(&direct, &composed).unwrap().statistic;
    assert!(ks < 0.01, "KS {ks}");

    let simulated: Vec<f64> = (0..REPS)
        .into_par_iter()
        .map(|rep| {
            let run =
                simulate_marked_poisson(n, rate, t, &mut SeedSpec::new(14, rep).rng()).unwrap();
            run.repeats_at(t) as f64
        })
        .collect();
    let ks = ks_two_sample(&direct, &simulated).unwrap().statistic;
    assert!(ks < 0.01, "KS {ks}");
}

#[test]
fn recursion_matches_reimplementation() {
    let (n, k) = (50u64, 200usize);
    let mut rng = SeedSpec::new(15, 0).rng();
    let u: Vec<f64> = (0..k).map(|_| uniform_open(&mut rng)).collect();
    let mut expected = vec![0u64];
    for i in 1..=k {
        let prev = expected[i - 1];
        let threshold = (i as f64 - 1.0 - prev as f64) / n as f64;
        let hit = threshold > 0.0 && u[i - 1] <= threshold;
        expected.push(prev + u64::from(hit));
    }
    assert_eq!(recursive_repeats(k, n, &u).unwrap(), expected);
}

#[test]
fn simulated_repeats_follow_recursion_on_event_index() {
    for seed in 0..50 {
        let run =
            simulate_marked_poisson(30, 1.0, 3.0, &mut SeedSpec::new(16, seed).rng()).unwrap();
        let k = run.uniforms.len();
        let seq = recursive_repeats(k, 30, &run.uniforms).unwrap();
        for (i, &t) in run.event_times.iter().enumerate() {
            assert_eq!(run.repeats_at(t), seq[i + 1]);
        }
    }
}
