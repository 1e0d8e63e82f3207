//! Simulation and numerical-analysis toolkit for grant-free NOMA uplinks in
//! massive IoT.
//!
//! The crate is split by layer:
//!
//! * [`bounds`]: Shannon and normal-approximation rates, Eb/N0 conversions and
//!   the OMA/NOMA required-energy load curves.
//! * [`macsim`]: Monte Carlo engine for the independently Rayleigh-faded
//!   multiple access channel (individual outage, multi-user diversity gain).
//! * [`phy`]: QPSK, symbol-level spreading, sequence pools, the sparse
//!   joint modulation/spreading codebook and signature collisions.
//! * [`rx`]: MMSE, hard-decision SIC and exhaustive ML detection, LS channel
//!   estimation and the end-to-end link simulator.
//! * [`sysmodel`]: sparse activation, slotted-Aloha contention and the
//!   grant-based vs grant-free signaling overhead accountant.
//!
//! Every Monte Carlo routine keys its randomness on
//! [`rng::rng_substream`], so results depend only on the master seed and
//! never on thread count or evaluation order.

pub mod bounds;
pub mod error;
pub mod macsim;
pub mod phy;
pub mod rng;
pub mod rx;
pub mod sysmodel;

pub use error::{Error, Result};

/// Complex baseband sample.
pub type C64 = num_complex::Complex64;

/// Linear power ratio to decibels.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Decibels to linear power ratio.
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
