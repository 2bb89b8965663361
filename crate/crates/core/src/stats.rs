//! Small statistical helpers: chi-square quantiles for even degrees of freedom,
//! complex Gaussian and ball samplers, and binomial confidence bounds.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec};

/// CDF of the chi-square distribution with `2 m` degrees of freedom.
pub fn chi_square_even_cdf(x: f64, m: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let half = x / 2.0;
    // survival = exp(-x/2) sum_{j<m} (x/2)^j / j!
    let mut term = libm::exp(-half);
    let mut survival = 0.0;
    for j in 0..m {
        if j > 0 {
            term *= half / j as f64;
        }
        survival += term;
    }
    (1.0 - survival).clamp(0.0, 1.0)
}

/// Inverse CDF of the chi-square distribution with `2 m` degrees of freedom.
pub fn chi_square_even_quantile(prob: f64, m: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&prob) || m == 0 {
        return Err(Error::Domain {
            name: "probability",
            value: prob,
            domain: "[0, 1)",
        });
    }
    if prob == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 2.0 * m as f64 + 10.0;
    while chi_square_even_cdf(hi, m) < prob {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_square_even_cdf(mid, m) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Sample from `CN(0, var I_m)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, m: usize, var: f64) -> CVec {
    let sd = libm::sqrt(var / 2.0);
    CVec::from_fn(m, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c(sd * re, sd * im)
    })
}

/// Sample from `CN(0, S S^H)` given a square root `S`.
pub fn correlated_gaussian<R: Rng + ?Sized>(rng: &mut R, sqrt_cov: &CMat) -> CVec {
    sqrt_cov * complex_gaussian(rng, sqrt_cov.ncols(), 1.0)
}

/// Point in the complex ball `‖x‖ <= radius`: on the sphere when `boundary`,
/// otherwise uniform in the ball.
pub fn ball_point<R: Rng + ?Sized>(rng: &mut R, m: usize, radius: f64, boundary: bool) -> CVec {
    let mut x = complex_gaussian(rng, m, 1.0);
    let n = x.norm();
    if n == 0.0 || radius == 0.0 {
        return CVec::zeros(m);
    }
    let r = if boundary {
        radius
    } else {
        let u: f64 = rng.gen();
        radius * libm::pow(u, 1.0 / (2.0 * m as f64))
    };
    x.scale_mut(r / n);
    x
}

/// Binomial proportion with its normal-approximation standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportion {
    pub successes: usize,
    pub trials: usize,
}

impl Proportion {
    pub fn estimate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let p = self.estimate();
        libm::sqrt(p * (1.0 - p) / self.trials as f64)
    }

    /// Standard error evaluated at a reference probability (useful when the estimate is 0).
    pub fn std_err_at(&self, p: f64) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        libm::sqrt(p * (1.0 - p) / self.trials as f64)
    }

    /// Wilson score interval at `z` standard deviations.
    pub fn wilson(&self, z: f64) -> (f64, f64) {
        if self.trials == 0 {
            return (0.0, 1.0);
        }
        let n = self.trials as f64;
        let p = self.estimate();
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let centre = (p + z2 / (2.0 * n)) / denom;
        let half = z * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
        ((centre - half).max(0.0), (centre + half).min(1.0))
    }
}
