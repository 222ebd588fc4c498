//! Distribution function of the unit spectrally positive stable law by
//! numerical inversion of its characteristic function.
//!
//! With `phi(u) = exp(-|u|^alpha (1 - i sgn(u) tan(pi alpha / 2)))`,
//! `F(x) = 1/2 - (1/pi) int_0^inf exp(-u^alpha) sin(u^alpha tan(pi alpha / 2) - u x) / u du`.
//! The integrand is bounded near 0 for `alpha > 1` and the tail beyond
//! `u^alpha = 40` is below double precision.

use std::f64::consts::PI;

use rand::Rng;

use crate::distributions::ServiceModel;
use crate::error::{invalid, Error, Result};

use super::ks::Ecdf;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point
/// Gauss rule.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod: splits the worst interval until the
/// summed error estimate is below `tol`.
fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_intervals: usize,
) -> (f64, f64, bool) {
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= tol {
            return (total, err, true);
        }
        if parts.len() >= max_intervals {
            return (total, err, false);
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// `P(Z <= x)` for `Z ~ S_alpha(1, 1, 0)`, `alpha` in `(1, 2)`, to about
/// `1e-9` absolute error for moderate `|x|`.
pub fn stable_cdf_oracle(alpha: f64, x: f64) -> Result<f64> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(invalid(
            "alpha",
            format!("oracle needs alpha in (1, 2), got {alpha}"),
        ));
    }
    if !x.is_finite() {
        return Err(invalid("x", format!("must be finite, got {x}")));
    }
    let skew = (PI * alpha / 2.0).tan();
    let upper = 40f64.powf(1.0 / alpha);
    let integrand = |u: f64| {
        let ua = u.powf(alpha);
        (-ua).exp() * (ua * skew - u * x).sin() / u
    };
    let (value, err, ok) = integrate(integrand, 0.0, upper, 1e-10, 4000);
    if !ok {
        return Err(Error::Quadrature { x, estimate: err });
    }
    Ok((0.5 - value / PI).clamp(0.0, 1.0))
}

/// Inverse of [`stable_cdf_oracle`] by bisection, to `1e-9` in `x`.
pub fn stable_quantile(alpha: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("p", format!("must lie in (0, 1), got {p}")));
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    while stable_cdf_oracle(alpha, lo)? > p {
        lo *= 2.0;
        if lo < -1e3 {
            return Err(invalid("p", format!("quantile {p} below the bracket")));
        }
    }
    while stable_cdf_oracle(alpha, hi)? < p {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(invalid("p", format!("quantile {p} above the bracket")));
        }
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if stable_cdf_oracle(alpha, mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Empirical fluctuation scale of a service law with `alpha < 2`: the ratio
/// of the interquartile range of `(S_1 + ... + S_k - k E[S]) / k^(1/alpha)`
/// over `sums` draws to that of the unit stable law.
pub fn calibrate_fluctuation_scale<R: Rng + ?Sized>(
    model: &ServiceModel,
    k: usize,
    sums: usize,
    rng: &mut R,
) -> Result<f64> {
    if k == 0 || sums < 4 {
        return Err(invalid("sums", "need k >= 1 and at least four sums"));
    }
    let norm = (k as f64).powf(1.0 / model.alpha);
    let sample: Vec<f64> = (0..sums)
        .map(|_| {
            let total: f64 = (0..k).map(|_| model.sample(rng)).sum();
            (total - k as f64 * model.mean) / norm
        })
        .collect();
    let e = Ecdf::new(&sample)?;
    let empirical = e.quantile(0.75) - e.quantile(0.25);
    let unit = stable_quantile(model.alpha, 0.75)? - stable_quantile(model.alpha, 0.25)?;
    Ok(empirical / unit)
}
