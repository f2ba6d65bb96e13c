//! Standard normal and chi-square helpers.
//!
//! Φ uses the `libm` port of musl's `erfc` (about 1 ulp). `erfc` is only
//! evaluated at non-negative arguments; the other half comes from symmetry.

use libm::erfc;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc_inv;
use std::f64::consts::{PI, SQRT_2};

/// Φ(x).
pub fn cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * erfc(-x / SQRT_2)
    } else {
        1.0 - 0.5 * erfc(x / SQRT_2)
    }
}

/// 1 − Φ(x), accurate in the upper tail.
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// Two-sided p-value 2(1 − Φ(|z|)).
pub fn two_sided(z: f64) -> f64 {
    erfc(z.abs() / SQRT_2).min(1.0)
}

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Φ⁻¹(p) for p in (0, 1): the `statrs` inverse polished by one Newton step.
pub fn quantile(p: f64) -> f64 {
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    let density = pdf(x);
    if !x.is_finite() || density == 0.0 {
        return x;
    }
    // cdf(x) − p, computed on the side where it does not cancel
    let residual = if p < 0.5 { cdf(x) - p } else { (1.0 - p) - sf(x) };
    x - residual / density
}

/// Upper tail of the chi-square distribution. One and two degrees of freedom
/// use their closed forms; the incomplete gamma is good to about 1e-10.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if df == 1.0 {
        return two_sided(x.sqrt());
    }
    if df == 2.0 {
        return (-0.5 * x).exp();
    }
    ChiSquared::new(df).map_or(f64::NAN, |d| d.sf(x))
}
