//! Logistic (non-linear) energy-harvesting model.

use crate::error::{check_half_open_unit, check_open_unit, Error, Result};
use crate::linalg::{quad_form, CMat, CVec};

/// Harvester constants: saturation power `M`, slope `a`, turn-on point `b`,
/// and the derived offset `Omega = 1 / (1 + exp(a b))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhParams {
    saturation: f64,
    slope: f64,
    turn_on: f64,
    omega: f64,
}

impl EhParams {
    pub fn new(saturation: f64, slope: f64, turn_on: f64) -> Result<Self> {
        if !(saturation > 0.0 && saturation.is_finite()) {
            return Err(Error::Domain {
                name: "saturation",
                value: saturation,
                domain: "(0, inf)",
            });
        }
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::Domain {
                name: "slope",
                value: slope,
                domain: "(0, inf)",
            });
        }
        if !(turn_on >= 0.0 && turn_on.is_finite()) {
            return Err(Error::Domain {
                name: "turn_on",
                value: turn_on,
                domain: "[0, inf)",
            });
        }
        let omega = 1.0 / (1.0 + libm::exp(slope * turn_on));
        if !(omega > 0.0 && omega < 1.0) {
            return Err(Error::Domain {
                name: "omega",
                value: omega,
                domain: "(0, 1)",
            });
        }
        Ok(Self {
            saturation,
            slope,
            turn_on,
            omega,
        })
    }

    /// 24 mW saturation, a = 150, b = 0.014.
    pub fn reference() -> Self {
        Self::new(0.024, 150.0, 0.014).expect("reference constants are valid")
    }

    pub fn saturation(&self) -> f64 {
        self.saturation
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn turn_on(&self) -> f64 {
        self.turn_on
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// `1 + exp(-a (x - b))`, the logistic denominator.
    pub fn denominator(&self, x: f64) -> f64 {
        1.0 + libm::exp(-self.slope * (x - self.turn_on))
    }

    /// `M / (1 + exp(-a (x - b)))`, evaluated without overflow.
    pub fn logistic(&self, x: f64) -> f64 {
        let t = self.slope * (x - self.turn_on);
        if t >= 0.0 {
            self.saturation / (1.0 + libm::exp(-t))
        } else {
            let e = libm::exp(t);
            self.saturation * e / (1.0 + e)
        }
    }
}

/// Power at the harvester input: `rho (h^H (sum_j W_j + V) h + sigma^2)`.
pub fn input_power(h: &CVec, w: &[CMat], v: &CMat, rho: f64, sigma_s_sq: f64) -> Result<f64> {
    check_open_unit("rho", rho)?;
    let received: f64 = w.iter().map(|wj| quad_form(h, wj)).sum::<f64>() + quad_form(h, v);
    Ok((rho * (received + sigma_s_sq)).max(0.0))
}

/// Harvested power `(Psi - M Omega) / (1 - Omega)` with `Psi` the logistic of the input.
pub fn harvested_power(e_in: f64, p: &EhParams) -> f64 {
    let psi = p.logistic(e_in);
    ((psi - p.saturation * p.omega) / (1.0 - p.omega)).max(0.0)
}

/// Smallest input power whose harvested power equals `p_target`.
pub fn required_input_threshold(p_target: f64, p: &EhParams) -> Result<f64> {
    if !(p_target >= 0.0) {
        return Err(Error::Domain {
            name: "p_target",
            value: p_target,
            domain: "[0, saturation)",
        });
    }
    if p_target >= p.saturation {
        return Err(Error::InfeasibleTarget {
            target: p_target,
            saturation: p.saturation,
        });
    }
    let target = p_target.min((1.0 - 1e-9) * p.saturation);
    let ratio = target * (1.0 - p.omega) / p.saturation + p.omega;
    Ok(-libm::log(1.0 / ratio - 1.0) / p.slope + p.turn_on)
}

/// Linear harvesting model `eta * e_in`.
pub fn linear_harvested_power(e_in: f64, eta: f64) -> Result<f64> {
    check_half_open_unit("eta", eta)?;
    Ok(eta * e_in)
}
