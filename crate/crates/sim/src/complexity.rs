//! Interior-point flop-count proxies for the robust power-minimisation problems.
//!
//! These are order-of-magnitude estimates: the big-O size term is evaluated as
//! the expression itself and constants are taken as 1.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complexity {
    /// Number of real decision variables (order of).
    pub n: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub bounded_flops_proxy: f64,
    pub gaussian_flops_proxy: f64,
}

/// `tau` is the target accuracy in `(0, 1]`.
pub fn complexity_estimate(m: usize, k: usize, n_pu: usize, tau: f64) -> Result<Complexity, String> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(format!("tau must lie in (0, 1], got {tau}"));
    }
    let (m, k, np) = (m as f64, k as f64, n_pu as f64);
    let pairs = k * (k + 1.0) / 2.0;
    let n = (k + 1.0) * m * m + np + k + pairs;
    let log = (1.0 / tau).ln();

    let lmi_m1 = pairs + np + 2.0 * k + 1.0;
    let psi1 = lmi_m1 * m + k * k + 4.0 * np + 3.0 * k + 4.0;
    let per_iter_b = lmi_m1 * ((m + 1.0).powi(3) + n * (m + 1.0).powi(2))
        + (k + 1.0) * (m.powi(3) + n * m * m)
        + pairs
        + 2.0 * np
        + k
        + 2.0
        + n * n;

    let psi2 = 3.0 * k * k + 10.0 * k + 6.0 * np + 3.0;
    let per_iter_g = (pairs + 2.0 * k + np + 1.0) * (m.powi(3) + n * m * m)
        + 3.0 * k * (k + 3.0) / 2.0
        + 3.0 * np
        + 2.0
        + (pairs + k + np) * (m * m + m + 1.0).powi(2)
        + n * n;

    Ok(Complexity {
        n,
        psi1,
        psi2,
        bounded_flops_proxy: log * n * psi1.sqrt() * per_iter_b,
        gaussian_flops_proxy: log * n * psi2.sqrt() * per_iter_g,
    })
}
