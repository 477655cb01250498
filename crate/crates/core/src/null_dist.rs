//! Limiting null distributions.
//!
//! Under independence the corrected maximum statistic
//! `n·max ρ̂² − 2 log d + log log d` converges to the Gumbel-type law
//!
//! ```text
//! F(x) = exp{ −π^{−1/2} · exp(−x/2) }
//! ```
//!
//! whose `(1 − α)` quantile is `q_α = −log π − 2 log log{1/(1 − α)}`.
//! The `π^{−1/2}` constant is the one consistent with `q_α`; see the book
//! chapter on the null distribution for the derivation.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `π^{−1/2}`.
const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// `F(x)`.
pub fn gumbel_cdf(x: f64) -> f64 {
    (-INV_SQRT_PI * (-x / 2.0).exp()).exp()
}

/// Upper tail `1 − F(x)`, computed without cancellation.
pub fn gumbel_sf(x: f64) -> f64 {
    -(-INV_SQRT_PI * (-x / 2.0).exp()).exp_m1()
}

/// The `(1 − α)` quantile `q_α` of `F`.
pub fn gumbel_quantile(alpha: f64) -> Result<f64> {
    check_probability(alpha)?;
    // log{1/(1 − α)} = −log1p(−α)
    Ok(-PI.ln() - 2.0 * (-(-alpha).ln_1p()).ln())
}

/// Conservative level remap `α′ = 1 − exp(−α)`; using `q_{α′}` in place of
/// `q_α` yields a bound of exactly `α` on the asymptotic size.
pub fn conservative_alpha(alpha: f64) -> f64 {
    -(-alpha).exp_m1()
}

/// Simultaneous threshold `2 log{p(p − 1)/2} + q_α` over all region pairs.
pub fn fwer_threshold(p: usize, alpha: f64) -> Result<f64> {
    if p < 2 {
        return Err(Error::Domain(format!("need at least two regions, got {p}")));
    }
    let pairs = (p as f64) * (p as f64 - 1.0) / 2.0;
    Ok(2.0 * pairs.ln() + gumbel_quantile(alpha)?)
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Complementary error function, accurate to a few ulps in relative terms.
///
/// Below 1 it uses the positive-term series
/// `erf x = 2/√π · e^{−x²} Σ 2ⁿ x^{2n+1} / (1·3···(2n+1))`; above, the
/// continued fraction `erfc x = e^{−x²}/√π · 1/(x + ½/(x + 1/(x + 3/2/(x + …))))`
/// evaluated by the modified Lentz method.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 1.0 {
        return 1.0 - erf_series(x);
    }
    if x > 27.3 {
        return 0.0;
    }
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..10_000 {
        let a = k as f64 / 2.0;
        d = 1.0 / (x + a * d);
        c = x + a / c;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term > 1e-17 * sum {
        n += 1.0;
        term *= 2.0 * x * x / (2.0 * n + 1.0);
        sum += term;
    }
    2.0 / PI.sqrt() * (-x * x).exp() * sum
}

/// Standard normal quantile, refined by Newton steps on [`normal_cdf`].
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    let mut z = acklam_quantile(p);
    for _ in 0..3 {
        let density = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
        if density > 0.0 {
            z -= (normal_cdf(z) - p) / density;
        }
    }
    Ok(z)
}

/// Acklam's rational approximation (relative error about 1e−9), used as the
/// starting point for Newton refinement.
fn acklam_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.38357751867269e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

fn check_probability(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability {alpha} outside (0, 1)")))
    }
}
