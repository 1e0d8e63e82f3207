//! Closed-form rates and the required-energy load curves.
//!
//! The single-link pieces (capacity, dispersion, normal approximation) are
//! exact evaluations. The load curves answer "what total Eb/N0 keeps every
//! user's outage at or below `eps` when `K = mu * n` users share `n` channel
//! uses": OMA slices the resources in time, NOMA lets all users transmit on all
//! resources and relies on joint decoding (estimated with [`crate::macsim`]).

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{LN_2, LOG2_E, SQRT_2};

use crate::error::{domain, Error, Result};
use crate::macsim::{self, OutageQuery};
use crate::{from_db, to_db};

/// Lower edge of every SNR search bracket, dB.
pub const SNR_BRACKET_LO_DB: f64 = -20.0;
/// Upper edge of every SNR search bracket, dB. Also the overflow guard
/// (`10^12` linear).
pub const SNR_BRACKET_HI_DB: f64 = 120.0;
const ANALYTIC_TOL_DB: f64 = 0.01;
const MONTE_CARLO_TOL_DB: f64 = 0.1;

fn check_snr(snr: f64) -> Result<()> {
    if snr.is_nan() || snr < 0.0 {
        return domain(format!("snr must be >= 0, got {snr}"));
    }
    Ok(())
}

/// `log2(1 + snr)` in bits per channel use.
pub fn shannon_capacity(snr: f64) -> Result<f64> {
    check_snr(snr)?;
    Ok(snr.ln_1p() * LOG2_E)
}

/// Complex AWGN channel dispersion `(1 - (1 + snr)^-2) (log2 e)^2`.
pub fn channel_dispersion(snr: f64) -> Result<f64> {
    check_snr(snr)?;
    let inv = 1.0 / (1.0 + snr);
    Ok((1.0 - inv * inv) * LOG2_E * LOG2_E)
}

/// Gaussian tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Inverse of [`q_function`].
pub fn qinv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("probability must lie in (0,1), got {p}"));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Mirror onto the lower tail; statrs' erfc_inv is accurate to a few ulps
    // there, while its erfc is only good to ~1e-11 relative, so a Newton
    // polish through erfc would lose digits.
    let (tail, sign) = if p < 0.5 { (p, 1.0) } else { (1.0 - p, -1.0) };
    let x = SQRT_2 * erfc_inv(2.0 * tail);
    Ok(sign * x)
}

/// One finite-blocklength rate request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateQuery {
    /// Linear SNR.
    pub snr: f64,
    /// Channel uses.
    pub blocklength: u64,
    /// Target block error probability.
    pub eps: f64,
}

impl RateQuery {
    pub fn new(snr: f64, blocklength: u64, eps: f64) -> Result<Self> {
        let q = Self { snr, blocklength, eps };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        check_snr(self.snr)?;
        if self.blocklength == 0 {
            return domain("blocklength must be at least one channel use");
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return domain(format!("eps must lie in (0,1), got {}", self.eps));
        }
        Ok(())
    }
}

/// Capacity, dispersion and the resulting normal-approximation rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub capacity: f64,
    pub dispersion: f64,
    pub rate: f64,
}

/// `C - sqrt(V/n) Qinv(eps)`, floored at zero.
///
/// The `O(log n / n)` term is left out, which biases the result by at most
/// `log2(n) / (2n)` bits per channel use.
pub fn normal_approx_rate(q: &RateQuery) -> Result<RatePoint> {
    q.validate()?;
    let capacity = shannon_capacity(q.snr)?;
    let dispersion = channel_dispersion(q.snr)?;
    let backoff = (dispersion / q.blocklength as f64).sqrt() * qinv(q.eps)?;
    Ok(RatePoint {
        capacity,
        dispersion,
        rate: (capacity - backoff).max(0.0),
    })
}

/// `Eb/N0 = snr / spectral_efficiency`, both linear.
pub fn ebn0_from_snr(snr: f64, spectral_efficiency: f64) -> Result<f64> {
    if !(spectral_efficiency > 0.0) {
        return domain(format!(
            "spectral efficiency must be positive, got {spectral_efficiency}"
        ));
    }
    Ok(snr / spectral_efficiency)
}

/// Inverse of [`ebn0_from_snr`].
pub fn snr_from_ebn0(ebn0: f64, spectral_efficiency: f64) -> Result<f64> {
    if !(spectral_efficiency > 0.0) {
        return domain(format!(
            "spectral efficiency must be positive, got {spectral_efficiency}"
        ));
    }
    Ok(ebn0 * spectral_efficiency)
}

/// Parameters of a load-vs-Eb/N0 sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadCurveSpec {
    /// Information bits per packet.
    pub info_bits: f64,
    /// Target individual outage probability.
    pub eps: f64,
    /// Loads `mu = K / n` to evaluate.
    pub mu_grid: Vec<f64>,
    /// Channel uses of the finite-size NOMA proxy.
    pub finite_n: u32,
}

impl LoadCurveSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.info_bits > 0.0) {
            return domain("info_bits must be positive");
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return domain(format!("eps must lie in (0,1), got {}", self.eps));
        }
        if self.finite_n == 0 {
            return domain("finite_n must be positive");
        }
        if let Some(mu) = self.mu_grid.iter().find(|&&mu| !(mu > 0.0)) {
            return domain(format!("every load must be positive, got {mu}"));
        }
        Ok(())
    }

    /// Number of users of the finite proxy at load `mu`: `round(mu * finite_n)`.
    pub fn users_at(&self, mu: f64) -> u32 {
        (mu * self.finite_n as f64).round() as u32
    }
}

/// How an OMA user's supported rate is computed from its instantaneous SNR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// Shannon capacity.
    Asymptotic,
    /// Normal approximation over the user's TDMA slot.
    DispersionCorrected,
}

/// Outcome of solving one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    /// The required SNR is above the overflow guard, or the point cannot be
    /// sliced.
    Infeasible,
    /// The outage target was not met anywhere inside the SNR bracket.
    NotConverged,
}

/// Required total Eb/N0 at one load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub mu: f64,
    /// `None` unless `status` is [`PointStatus::Ok`].
    pub ebn0_db: Option<f64>,
    pub status: PointStatus,
}

impl LoadPoint {
    fn flagged(mu: f64, status: PointStatus) -> Self {
        Self { mu, ebn0_db: None, status }
    }
}

/// Smallest dB value in `[lo, hi]` (to within `tol`) at which `meets` holds,
/// given that `meets` is monotone (false below, true above). `None` when it
/// fails at `hi`.
pub(crate) fn bisect_db<F: FnMut(f64) -> bool>(
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    mut meets: F,
) -> Option<f64> {
    if !meets(hi) {
        return None;
    }
    if meets(lo) {
        return Some(lo);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if meets(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Smallest instantaneous SNR whose normal-approximation rate over
/// `blocklength` uses reaches `rate`.
fn dispersion_threshold(rate: f64, blocklength: u64, eps: f64) -> Result<Option<f64>> {
    let supported = |x: f64| -> Result<f64> {
        Ok(normal_approx_rate(&RateQuery::new(x, blocklength, eps)?)?.rate)
    };
    let guard = from_db(SNR_BRACKET_HI_DB) * 1e3;
    let mut hi = (2f64.powf(rate) - 1.0).max(1e-6);
    while supported(hi)? < rate {
        hi *= 2.0;
        if hi > guard {
            return Ok(None);
        }
    }
    // The normal-approximation rate is negative (floored) where it is not
    // increasing, so below the crossing it never reaches `rate`.
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if supported(mid)? >= rate {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(Some(hi))
}

/// Minimum total Eb/N0 (dB) for TDMA at load `mu`.
///
/// Each user owns `1/mu` channel uses (rounded down) and must carry
/// `info_bits`, i.e. a spectral efficiency of `info_bits * mu`. Under Rayleigh
/// fading the outage is `1 - exp(-x*/snr)` where `x*` is the smallest
/// instantaneous SNR supporting that rate; the required SNR is located by
/// bisection to 0.01 dB.
pub fn oma_required_total_ebn0(spec: &LoadCurveSpec, mu: f64, model: RateModel) -> Result<LoadPoint> {
    spec.validate()?;
    if !(mu > 0.0) {
        return domain(format!("load must be positive, got {mu}"));
    }
    let rate = spec.info_bits * mu;
    let threshold = match model {
        RateModel::Asymptotic => Some(2f64.powf(rate) - 1.0),
        RateModel::DispersionCorrected => {
            let slot = (1.0 / mu + 1e-9).floor();
            if slot < 1.0 {
                return Ok(LoadPoint::flagged(mu, PointStatus::Infeasible));
            }
            dispersion_threshold(rate, slot as u64, spec.eps)?
        }
    };
    let Some(threshold) = threshold.filter(|t| t.is_finite()) else {
        return Ok(LoadPoint::flagged(mu, PointStatus::Infeasible));
    };
    let outage = |snr_db: f64| -(-threshold / from_db(snr_db)).exp_m1();
    match bisect_db(SNR_BRACKET_LO_DB, SNR_BRACKET_HI_DB, ANALYTIC_TOL_DB, |db| {
        outage(db) <= spec.eps
    }) {
        Some(snr_db) => Ok(LoadPoint {
            mu,
            ebn0_db: Some(snr_db - to_db(rate)),
            status: PointStatus::Ok,
        }),
        None => Ok(LoadPoint::flagged(mu, PointStatus::Infeasible)),
    }
}

/// Minimum total Eb/N0 (dB) for NOMA at load `mu`, estimated on the finite
/// proxy of `round(mu * finite_n)` users over `finite_n` channel uses.
///
/// Every user sends `info_bits / finite_n` bits per channel use with an equal
/// share of the total power. The individual outage (union over all subsets
/// containing the user) is estimated with `trials` fading draws keyed on
/// `seed`, and the total SNR meeting `eps` is found by bisection to 0.1 dB on
/// those common draws.
pub fn noma_required_total_ebn0(
    spec: &LoadCurveSpec,
    mu: f64,
    trials: u64,
    seed: u64,
) -> Result<LoadPoint> {
    spec.validate()?;
    let users = spec.users_at(mu);
    if users == 0 {
        return domain(format!(
            "load {mu} gives no users on a {}-use proxy",
            spec.finite_n
        ));
    }
    let sum_rate = users as f64 * spec.info_bits / spec.finite_n as f64;
    let query = OutageQuery::equal_split(users as usize, sum_rate, 1.0, trials, seed)?;
    let samples = macsim::ThresholdSamples::draw(&query, 0)?;
    match bisect_db(SNR_BRACKET_LO_DB, SNR_BRACKET_HI_DB, MONTE_CARLO_TOL_DB, |db| {
        samples.outage_prob(from_db(db)).p_hat <= spec.eps
    }) {
        Some(snr_db) => Ok(LoadPoint {
            mu,
            ebn0_db: Some(snr_db - to_db(sum_rate)),
            status: PointStatus::Ok,
        }),
        None => Ok(LoadPoint::flagged(mu, PointStatus::NotConverged)),
    }
}

/// Convenience: the closed-form single-user outage threshold used by the
/// asymptotic OMA curve, `(2^r - 1) / -ln(1 - eps)`.
pub fn oma_asymptotic_snr(rate: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return domain(format!("eps must lie in (0,1), got {eps}"));
    }
    if !(rate > 0.0) {
        return Err(Error::Domain(format!("rate must be positive, got {rate}")));
    }
    Ok((rate * LN_2).exp_m1() / -(-eps).ln_1p())
}
