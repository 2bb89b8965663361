//! Network configuration, channel generation, CSI-error models and the
//! SINR / rate evaluators used for verification.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eh_model::EhParams;
use crate::error::{check_half_open_unit, Error, Result};
use crate::linalg::{check_psd, psd_sqrt, quad_form, CMat, CVec};
use crate::stats::{ball_point, chi_square_even_quantile, complex_gaussian, correlated_gaussian};

/// `dBm -> W`
pub fn dbm_to_watts(dbm: f64) -> f64 {
    libm::pow(10.0, (dbm - 30.0) / 10.0)
}

/// `W -> dBm`
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * libm::log10(w) + 30.0
}

/// System parameters. All powers are in Watts.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Transmit antennas at the cognitive base station.
    pub m: usize,
    /// Secondary users.
    pub k: usize,
    /// Primary users.
    pub n: usize,
    /// Antenna noise plus primary-transmitter interference at each SU.
    pub sigma_s_sq: f64,
    /// Decoding-circuit noise.
    pub sigma_d_sq: f64,
    /// Minimum rate per SU in bit/s/Hz.
    pub r_min: f64,
    /// Minimum harvested power per SU.
    pub p_ks: f64,
    /// Interference limit per PU.
    pub p_np: f64,
    /// Transmit power budget.
    pub p_b: f64,
    /// Rate outage tolerance.
    pub xi_k: f64,
    /// Harvesting outage tolerance.
    pub xi_ks: f64,
    /// Interference outage tolerance.
    pub xi_np: f64,
    pub eh: EhParams,
    /// Allow a dedicated energy beam `V`; when false `V` is pinned to zero.
    pub energy_beam: bool,
}

impl NetworkConfig {
    /// Reference desk configuration: noise 0.1 W / 0.01 W, 10 mW harvesting target,
    /// -18 dBm interference limit, 1 bit/s/Hz, 2 W budget, 5 % outage, 24 mW / 150 / 0.014 harvester.
    pub fn reference(m: usize, k: usize, n: usize) -> Self {
        Self {
            m,
            k,
            n,
            sigma_s_sq: 0.1,
            sigma_d_sq: 0.01,
            r_min: 1.0,
            p_ks: 0.01,
            p_np: dbm_to_watts(-18.0),
            p_b: 2.0,
            xi_k: 0.05,
            xi_ks: 0.05,
            xi_np: 0.05,
            eh: EhParams::reference(),
            energy_beam: true,
        }
    }

    /// SINR target `2^r_min - 1`.
    pub fn gamma_min(&self) -> f64 {
        libm::exp2(self.r_min) - 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 {
            return Err(Error::Config("need at least one antenna and one SU".into()));
        }
        for (name, v) in [
            ("sigma_s_sq", self.sigma_s_sq),
            ("sigma_d_sq", self.sigma_d_sq),
            ("p_np", self.p_np),
            ("p_b", self.p_b),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain {
                    name,
                    value: v,
                    domain: "(0, inf)",
                });
            }
        }
        for (name, v) in [("r_min", self.r_min), ("p_ks", self.p_ks)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain {
                    name,
                    value: v,
                    domain: "[0, inf)",
                });
            }
        }
        check_half_open_unit("xi_k", self.xi_k)?;
        check_half_open_unit("xi_ks", self.xi_ks)?;
        check_half_open_unit("xi_np", self.xi_np)?;
        Ok(())
    }
}

/// Description of the channel-estimation error.
#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintyModel {
    Perfect,
    /// Errors lie in norm balls of the given radii.
    Bounded {
        su_radius: Vec<f64>,
        pu_radius: Vec<f64>,
    },
    /// Errors are `CN(0, cov)`.
    Gaussian {
        su_cov: Vec<CMat>,
        pu_cov: Vec<CMat>,
    },
}

impl UncertaintyModel {
    /// Isotropic Gaussian errors with per-entry variances.
    pub fn gaussian_isotropic(cfg: &NetworkConfig, su_var: f64, pu_var: f64) -> Self {
        let id = CMat::identity(cfg.m, cfg.m);
        UncertaintyModel::Gaussian {
            su_cov: (0..cfg.k).map(|_| id.scale(su_var)).collect(),
            pu_cov: (0..cfg.n).map(|_| id.scale(pu_var)).collect(),
        }
    }

    /// Balls containing the isotropic Gaussian error with probability `1 - xi`.
    pub fn bounded_from_variances(cfg: &NetworkConfig, su_var: f64, pu_var: f64) -> Result<Self> {
        let phi = bounded_radius_from_gaussian(su_var, cfg.m, cfg.xi_k)?;
        let psi = bounded_radius_from_gaussian(pu_var, cfg.m, cfg.xi_np)?;
        Ok(UncertaintyModel::Bounded {
            su_radius: alloc::vec![phi; cfg.k],
            pu_radius: alloc::vec![psi; cfg.n],
        })
    }

    pub fn validate(&self, cfg: &NetworkConfig) -> Result<()> {
        match self {
            UncertaintyModel::Perfect => Ok(()),
            UncertaintyModel::Bounded {
                su_radius,
                pu_radius,
            } => {
                check_len(su_radius.len(), cfg.k)?;
                check_len(pu_radius.len(), cfg.n)?;
                for &r in su_radius.iter().chain(pu_radius) {
                    if !(r >= 0.0 && r.is_finite()) {
                        return Err(Error::Domain {
                            name: "radius",
                            value: r,
                            domain: "[0, inf)",
                        });
                    }
                }
                Ok(())
            }
            UncertaintyModel::Gaussian { su_cov, pu_cov } => {
                check_len(su_cov.len(), cfg.k)?;
                check_len(pu_cov.len(), cfg.n)?;
                for cov in su_cov.iter().chain(pu_cov) {
                    check_len(cov.nrows(), cfg.m)?;
                    if !check_psd(cov, 1e-12) {
                        return Err(Error::NotPsd(crate::linalg::min_eigenvalue(cov)));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UncertaintyModel::Perfect => "perfect",
            UncertaintyModel::Bounded { .. } => "bounded",
            UncertaintyModel::Gaussian { .. } => "gaussian",
        }
    }
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

/// Estimated channels and their uncertainty description. SUs are ordered by
/// ascending `‖h_hat‖^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h_hat: Vec<CVec>,
    pub g_hat: Vec<CVec>,
    pub uncertainty: UncertaintyModel,
    /// `order[k]` is the draw index of the SU now at position `k`.
    pub order: Vec<usize>,
}

impl ChannelSet {
    /// Build from explicit vectors; SUs are sorted by ascending gain.
    pub fn new(h_hat: Vec<CVec>, g_hat: Vec<CVec>, uncertainty: UncertaintyModel) -> Self {
        let mut set = Self {
            order: (0..h_hat.len()).collect(),
            h_hat,
            g_hat,
            uncertainty,
        };
        set.sort_users();
        set
    }

    /// Stable ascending sort of SUs by channel gain (ties keep the current order).
    pub fn sort_users(&mut self) {
        let mut idx: Vec<usize> = (0..self.h_hat.len()).collect();
        idx.sort_by(|&a, &b| {
            self.h_hat[a]
                .norm_squared()
                .partial_cmp(&self.h_hat[b].norm_squared())
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        self.h_hat = idx.iter().map(|&i| self.h_hat[i].clone()).collect();
        self.order = idx.iter().map(|&i| self.order[i]).collect();
        if let UncertaintyModel::Bounded { su_radius, .. } = &mut self.uncertainty {
            if su_radius.len() == idx.len() {
                *su_radius = idx.iter().map(|&i| su_radius[i]).collect();
            }
        }
        if let UncertaintyModel::Gaussian { su_cov, .. } = &mut self.uncertainty {
            if su_cov.len() == idx.len() {
                *su_cov = idx.iter().map(|&i| su_cov[i].clone()).collect();
            }
        }
    }

    pub fn with_uncertainty(mut self, uncertainty: UncertaintyModel) -> Self {
        self.uncertainty = uncertainty;
        self
    }

    pub fn num_su(&self) -> usize {
        self.h_hat.len()
    }

    pub fn num_pu(&self) -> usize {
        self.g_hat.len()
    }

    pub fn antennas(&self) -> usize {
        self.h_hat
            .first()
            .or(self.g_hat.first())
            .map_or(0, |h| h.len())
    }

    /// Channel set restricted to one SU (and all PUs).
    pub fn single_user(&self, k: usize) -> ChannelSet {
        let uncertainty = match &self.uncertainty {
            UncertaintyModel::Perfect => UncertaintyModel::Perfect,
            UncertaintyModel::Bounded {
                su_radius,
                pu_radius,
            } => UncertaintyModel::Bounded {
                su_radius: alloc::vec![su_radius[k]],
                pu_radius: pu_radius.clone(),
            },
            UncertaintyModel::Gaussian { su_cov, pu_cov } => UncertaintyModel::Gaussian {
                su_cov: alloc::vec![su_cov[k].clone()],
                pu_cov: pu_cov.clone(),
            },
        };
        ChannelSet {
            h_hat: alloc::vec![self.h_hat[k].clone()],
            g_hat: self.g_hat.clone(),
            uncertainty,
            order: alloc::vec![self.order[k]],
        }
    }

    /// SU radius (bounded model) or 0.
    pub fn su_radius(&self, k: usize) -> f64 {
        match &self.uncertainty {
            UncertaintyModel::Bounded { su_radius, .. } => su_radius[k],
            _ => 0.0,
        }
    }

    /// PU radius (bounded model) or 0.
    pub fn pu_radius(&self, n: usize) -> f64 {
        match &self.uncertainty {
            UncertaintyModel::Bounded { pu_radius, .. } => pu_radius[n],
            _ => 0.0,
        }
    }
}

/// Independent, reproducible seed for trial `trial` of an experiment seeded with `seed`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    // SplitMix64 finaliser over a combined key
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(trial.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn user_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw `CN(0, su_var I)` SU channels and `CN(0, pu_var I)` PU channels.
///
/// Every user has its own random stream, so adding antennas extends each vector
/// and adding users leaves existing draws untouched.
pub fn draw_channels(
    cfg: &NetworkConfig,
    su_var: f64,
    pu_var: f64,
    seed: u64,
) -> Result<ChannelSet> {
    for (name, v) in [("su_var", su_var), ("pu_var", pu_var)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain {
                name,
                value: v,
                domain: "(0, inf)",
            });
        }
    }
    let h_hat = (0..cfg.k)
        .map(|k| complex_gaussian(&mut user_stream(seed, 2 * k as u64), cfg.m, su_var))
        .collect();
    let g_hat = (0..cfg.n)
        .map(|n| complex_gaussian(&mut user_stream(seed, 2 * n as u64 + 1), cfg.m, pu_var))
        .collect();
    Ok(ChannelSet::new(h_hat, g_hat, UncertaintyModel::Perfect))
}

/// Radius of the ball holding a `CN(0, var I_m)` error with probability `1 - xi`:
/// `sqrt(var * F^{-1}_{2m}(1 - xi) / 2)`.
pub fn bounded_radius_from_gaussian(var: f64, m: usize, xi: f64) -> Result<f64> {
    check_half_open_unit("xi", xi)?;
    if !(var >= 0.0) {
        return Err(Error::Domain {
            name: "var",
            value: var,
            domain: "[0, inf)",
        });
    }
    if var == 0.0 {
        return Ok(0.0);
    }
    let q = chi_square_even_quantile(1.0 - xi, m)?;
    Ok(libm::sqrt(var * q / 2.0))
}

/// SINR of stream `k` at SU `i` (0-based, `k <= i`) for the realised channel
/// `h_hat[i] + dh`, with imperfect-SIC residual of streams `j < k`.
#[allow(clippy::too_many_arguments)]
pub fn sinr(
    i: usize,
    k: usize,
    w: &[CMat],
    v: &CMat,
    rho: f64,
    dh: &CVec,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
) -> Result<f64> {
    if k > i {
        return Err(Error::Index { k, i });
    }
    crate::error::check_open_unit("rho", rho)?;
    let h = &ch.h_hat[i] + dh;
    let signal = quad_form(&h, &w[k]);
    let residual: f64 = w[..k].iter().map(|wj| quad_form(dh, wj)).sum();
    let later: f64 = w[k + 1..].iter().map(|wj| quad_form(&h, wj)).sum();
    let denom = residual + later + quad_form(&h, v) + cfg.sigma_s_sq + cfg.sigma_d_sq / (1.0 - rho);
    Ok((signal / denom).max(0.0))
}

/// Error draw for SU `i` according to the channel set's uncertainty model.
pub fn sample_su_error<R: rand::Rng + ?Sized>(
    ch: &ChannelSet,
    i: usize,
    sqrt_cov: Option<&CMat>,
    boundary: bool,
    rng: &mut R,
) -> CVec {
    let m = ch.h_hat[i].len();
    match &ch.uncertainty {
        UncertaintyModel::Perfect => CVec::zeros(m),
        UncertaintyModel::Bounded { su_radius, .. } => ball_point(rng, m, su_radius[i], boundary),
        UncertaintyModel::Gaussian { .. } => match sqrt_cov {
            Some(s) => correlated_gaussian(rng, s),
            None => CVec::zeros(m),
        },
    }
}

/// Square roots of the SU error covariances (Gaussian model), else `None`.
pub fn su_cov_sqrts(ch: &ChannelSet) -> Result<Option<Vec<CMat>>> {
    match &ch.uncertainty {
        UncertaintyModel::Gaussian { su_cov, .. } => Ok(Some(
            su_cov
                .iter()
                .map(|c| psd_sqrt(c, 1e-12))
                .collect::<Result<Vec<_>>>()?,
        )),
        _ => Ok(None),
    }
}

/// Sampled worst rate of stream `k`: minimum over receivers `i >= k` and
/// `n_samples` error draws of `log2(1 + SINR)`. Half of the ball draws lie on the
/// boundary.
#[allow(clippy::too_many_arguments)]
pub fn achievable_rate_samples(
    k: usize,
    w: &[CMat],
    v: &CMat,
    rho: f64,
    ch: &ChannelSet,
    cfg: &NetworkConfig,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let sqrts = su_cov_sqrts(ch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let m = cfg.m;
    for i in k..ch.num_su() {
        let nominal = sinr(i, k, w, v, rho, &CVec::zeros(m), ch, cfg)?;
        worst = worst.min(libm::log2(1.0 + nominal));
        if matches!(ch.uncertainty, UncertaintyModel::Perfect) {
            continue;
        }
        for s in 0..n_samples {
            let dh = sample_su_error(ch, i, sqrts.as_ref().map(|v| &v[i]), s % 2 == 0, &mut rng);
            let g = sinr(i, k, w, v, rho, &dh, ch, cfg)?;
            worst = worst.min(libm::log2(1.0 + g));
        }
    }
    Ok(worst)
}
