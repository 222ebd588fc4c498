use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// Supremum distance between the two distribution functions.
    pub statistic: f64,
    pub n1: usize,
    /// Zero for comparisons against an exact distribution.
    pub n2: usize,
}

fn sorted(sample: &[f64], name: &'static str) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::EmptySample(name));
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(crate::error::invalid(name, "sample contains NaN"));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample Kolmogorov-Smirnov distance, exact for samples with ties.
/// Infinite values are allowed and compare as ordinary points.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let a = sorted(a, "a")?;
    let b = sorted(b, "b")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        statistic: d,
        n1: a.len(),
        n2: b.len(),
    })
}

/// Distance between the empirical CDF and a continuous `cdf`.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let v = sorted(sample, "sample")?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult {
        statistic: d,
        n1: v.len(),
        n2: 0,
    })
}

/// Distance between the empirical CDF of an integer sample and a CDF on
/// `0..=support_max`, checked at every support point.
pub fn ks_discrete(sample: &[u64], cdf: impl Fn(u64) -> f64, support_max: u64) -> Result<KsResult> {
    if sample.is_empty() {
        return Err(Error::EmptySample("sample"));
    }
    let top = support_max.max(*sample.iter().max().expect("non-empty"));
    let mut counts = vec![0usize; top as usize + 1];
    for &x in sample {
        counts[x as usize] += 1;
    }
    let n = sample.len() as f64;
    let mut below = 0usize;
    let mut d: f64 = 0.0;
    for (k, &c) in counts.iter().enumerate() {
        below += c;
        d = d.max((below as f64 / n - cdf(k as u64)).abs());
    }
    Ok(KsResult {
        statistic: d,
        n1: sample.len(),
        n2: 0,
    })
}

/// Empirical distribution of a sample.
#[derive(Debug, Clone)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(sample: &[f64]) -> Result<Self> {
        Ok(Self {
            sorted: sorted(sample, "sample")?,
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of the sample at or below `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Quantile by linear interpolation between order statistics.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let h = p * (self.sorted.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        let (a, b) = (self.sorted[lo], self.sorted[hi]);
        if lo == hi || a == b {
            a
        } else {
            a + (h - lo as f64) * (b - a)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{sample_exponential, SeedSpec};

    #[test]
    fn trivial_distances() {
        let a = [3.0, 1.0, 2.0, 2.0];
        assert_eq!(
            ks_two_sample(&a, &[2.0, 1.0, 2.0, 3.0]).unwrap().statistic,
            0.0
        );
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap().statistic, 1.0);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
        assert!(ks_two_sample(&[1.0], &[]).is_err());
        let r = ks_two_sample(&[1.0, 2.0], &[1.0, 1.0, 3.0]).unwrap();
        assert!((r.statistic - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((r.n1, r.n2), (2, 3));
    }

    #[test]
    fn infinite_values_are_points() {
        let r = ks_two_sample(&[1.0, f64::INFINITY], &[1.0, 2.0]).unwrap();
        assert_eq!(r.statistic, 0.5);
    }

    #[test]
    fn exponential_samples_agree() {
        let draw = |seed| {
            let mut rng = SeedSpec::new(seed, 0).rng();
            (0..100_000)
                .map(|_| sample_exponential(1.0, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        let mut passes = 0;
        for s in 0..20 {
            if ks_two_sample(&draw(2 * s), &draw(2 * s + 1))
                .unwrap()
                .statistic
                < 0.01
            {
                passes += 1;
            }
        }
        assert!(passes >= 19, "{passes}/20");
    }

    #[test]
    fn one_sample_against_uniform() {
        let r = ks_one_sample(&[0.5], |x| x).unwrap();
        assert_eq!(r.statistic, 0.5);
        let grid: Vec<f64> = (1..=1000).map(|k| (k as f64 - 0.5) / 1000.0).collect();
        assert!((ks_one_sample(&grid, |x| x).unwrap().statistic - 0.0005).abs() < 1e-12);
    }

    #[test]
    fn discrete_against_point_mass() {
        let r = ks_discrete(&[2, 2, 2], |k| if k >= 2 { 1.0 } else { 0.0 }, 5).unwrap();
        assert_eq!(r.statistic, 0.0);
        let r = ks_discrete(&[1, 3], |k| if k >= 2 { 1.0 } else { 0.0 }, 5).unwrap();
        assert_eq!(r.statistic, 0.5);
    }

    #[test]
    fn ecdf_quantiles() {
        let e = Ecdf::new(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(e.quantile(0.5), 2.5);
        assert_eq!(e.quantile(0.0), 1.0);
        assert_eq!(e.quantile(1.0), 4.0);
        assert_eq!(e.eval(2.0), 0.5);
        assert_eq!(e.eval(0.0), 0.0);
    }
}
