//! Rectangle probabilities of a centered multivariate normal.
//!
//! Genz's separation-of-variables transform turns `P(l < X < u)` into an
//! integral over the unit cube of dimension `d − 1`, which is estimated by
//! randomly shifted rank-1 lattice rules. The spread of the shift means gives
//! the standard error; the lattice size doubles until it is small enough.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::normal;
use crate::rng::{stream, Domain};

/// Diagonal ridge added when the Cholesky factorization fails.
pub const RIDGE: f64 = 1e-8;
pub const DEFAULT_ACCURACY: f64 = 5e-4;

const SHIFTS: usize = 12;
const START_POINTS: usize = 1 << 9;
const MAX_POINTS: usize = 1 << 20;
const PRIMES: [f64; 8] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnEstimate {
    pub probability: f64,
    pub std_error: f64,
    /// The ridge was needed to factorize the matrix.
    pub regularized: bool,
}

fn cholesky(sigma: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    if let Some(c) = sigma.clone().cholesky() {
        return Ok((c.l(), false));
    }
    let ridged = sigma + DMatrix::identity(sigma.nrows(), sigma.ncols()) * RIDGE;
    ridged
        .cholesky()
        .map(|c| (c.l(), true))
        .ok_or(Error::NotPositiveSemidefinite)
}

/// Integrand at cube point `w` (length `d − 1`).
fn integrand(l: &DMatrix<f64>, lower: &[f64], upper: &[f64], w: &[f64], y: &mut [f64]) -> f64 {
    let d = lower.len();
    let mut f = 1.0;
    for i in 0..d {
        let s: f64 = (0..i).map(|j| l[(i, j)] * y[j]).sum();
        let lii = l[(i, i)];
        let lo = normal::cdf((lower[i] - s) / lii);
        let hi = normal::cdf((upper[i] - s) / lii);
        let width = hi - lo;
        if width <= 0.0 {
            return 0.0;
        }
        f *= width;
        if i + 1 < d {
            let p = (lo + w[i] * width).clamp(1e-300, 1.0 - 1e-16);
            y[i] = normal::quantile(p);
        }
    }
    f
}

/// `P(lower < X < upper)` for `X ~ N(0, sigma)`, estimated to standard error
/// `accuracy` with the stream derived from `seed`.
pub fn mvn_rectangle(
    sigma: &DMatrix<f64>,
    lower: &[f64],
    upper: &[f64],
    accuracy: f64,
    seed: u64,
) -> Result<MvnEstimate> {
    let d = lower.len();
    if d == 0 || d > PRIMES.len() || upper.len() != d || sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::InvalidInput(format!(
            "mvn_rectangle needs matching bounds and a square matrix of dimension 1..={}",
            PRIMES.len()
        )));
    }
    if lower.iter().zip(upper).any(|(a, b)| a > b) {
        return Err(Error::InvalidInput("lower bound exceeds upper bound".into()));
    }
    let (l, regularized) = cholesky(sigma)?;
    if d == 1 {
        let s = l[(0, 0)];
        return Ok(MvnEstimate {
            probability: normal::cdf(upper[0] / s) - normal::cdf(lower[0] / s),
            std_error: 0.0,
            regularized,
        });
    }

    let dims = d - 1;
    let generators: Vec<f64> = PRIMES[..dims].iter().map(|p| p.sqrt().fract()).collect();
    let mut rng = stream(seed, Domain::Mvn, 0, 0);
    let mut w = vec![0.0; dims];
    let mut y = vec![0.0; d];
    let mut points = START_POINTS;
    loop {
        let mut means = [0.0; SHIFTS];
        for mean in means.iter_mut() {
            let shift: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
            let mut sum = 0.0;
            for k in 1..=points {
                for j in 0..dims {
                    // baker's transform of the shifted lattice point
                    let x = (k as f64 * generators[j] + shift[j]).fract();
                    w[j] = (2.0 * x - 1.0).abs();
                }
                sum += integrand(&l, lower, upper, &w, &mut y);
            }
            *mean = sum / points as f64;
        }
        let m = means.iter().sum::<f64>() / SHIFTS as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (SHIFTS * (SHIFTS - 1)) as f64;
        let se = var.sqrt();
        if se <= accuracy || points >= MAX_POINTS {
            return Ok(MvnEstimate {
                probability: m.clamp(0.0, 1.0),
                std_error: se,
                regularized,
            });
        }
        points *= 2;
    }
}

/// Covariance rescaled to unit diagonal.
pub fn correlation(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let s: Vec<f64> = (0..cov.nrows()).map(|i| cov[(i, i)].sqrt()).collect();
    DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| cov[(i, j)] / (s[i] * s[j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimension_is_exact() {
        let s = DMatrix::from_element(1, 1, 1.0);
        let e = mvn_rectangle(&s, &[-1.0], &[2.0], 1e-4, 0).unwrap();
        assert!((e.probability - (normal::cdf(2.0) - normal::cdf(-1.0))).abs() < 1e-15);
    }

    #[test]
    fn independence_product() {
        for d in 2..=4 {
            let s = DMatrix::identity(d, d);
            let c = 1.3;
            let e = mvn_rectangle(&s, &vec![-c; d], &vec![c; d], 5e-4, 9).unwrap();
            let want = (2.0 * normal::cdf(c) - 1.0).powi(d as i32);
            assert!((e.probability - want).abs() <= 3.0 * e.std_error.max(1e-12), "{d}: {e:?} vs {want}");
        }
    }

    #[test]
    fn bivariate_against_quadrature() {
        // integrate the conditional form: P = ∫_{-1}^{1} φ(x) P(|Y| < 1 | x) dx
        let rho: f64 = 0.5;
        let sd = (1.0 - rho * rho).sqrt();
        let steps = 20_000;
        let h = 2.0 / steps as f64;
        let f = |x: f64| {
            let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            phi * (normal::cdf((1.0 - rho * x) / sd) - normal::cdf((-1.0 - rho * x) / sd))
        };
        let mut quad = 0.5 * (f(-1.0) + f(1.0));
        for k in 1..steps {
            quad += f(-1.0 + k as f64 * h);
        }
        quad *= h;
        let s = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let e = mvn_rectangle(&s, &[-1.0, -1.0], &[1.0, 1.0], 1e-4, 3).unwrap();
        assert!((e.probability - quad).abs() <= 3.0 * e.std_error.max(1e-9), "{e:?} vs {quad}");
    }

    #[test]
    fn singular_matrix_is_ridged() {
        let s = DMatrix::from_element(2, 2, 1.0);
        let e = mvn_rectangle(&s, &[-1.0, -1.0], &[1.0, 1.0], 5e-4, 1).unwrap();
        assert!(e.regularized);
        let want = 2.0 * normal::cdf(1.0) - 1.0;
        assert!((e.probability - want).abs() < 2e-3, "{e:?}");
    }

    #[test]
    fn monotone_in_bounds() {
        let s = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.2, 0.3, 1.0, 0.4, 0.2, 0.4, 1.0]);
        let small = mvn_rectangle(&s, &[-1.0; 3], &[1.0; 3], 5e-4, 2).unwrap();
        let big = mvn_rectangle(&s, &[-1.2; 3], &[1.5; 3], 5e-4, 2).unwrap();
        assert!(big.probability >= small.probability - 3.0 * (small.std_error + big.std_error));
    }

    #[test]
    fn rejects_bad_input() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            mvn_rectangle(&s, &[-1.0; 2], &[1.0; 2], 1e-3, 0),
            Err(Error::NotPositiveSemidefinite)
        ));
        let s = DMatrix::identity(2, 2);
        assert!(mvn_rectangle(&s, &[1.0, 0.0], &[0.0, 1.0], 1e-3, 0).is_err());
    }
}
