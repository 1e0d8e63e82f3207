//! System-level models: sparse device activation, slotted-Aloha signature
//! contention and the grant-based vs grant-free signaling overhead.
//!
//! Reception is slot-aligned; timing offsets inside a slot are not modeled.
//! Collided packets are lost (no retransmission).

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete, DiscreteCDF};

use crate::error::{domain, Error, Result};
use crate::phy::{collided, collision_probability, pick_signatures};
use crate::rng::{map_trials, trial_rng};

/// Sparse per-slot Bernoulli activity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    pub device_count: u64,
    pub activation_prob: f64,
    pub payload_bits: u64,
}

impl TrafficModel {
    pub fn new(device_count: u64, activation_prob: f64, payload_bits: u64) -> Result<Self> {
        let t = Self { device_count, activation_prob, payload_bits };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.activation_prob) {
            return domain(format!("activation probability must lie in [0,1], got {}", self.activation_prob));
        }
        if self.payload_bits == 0 {
            return domain("payload must be at least one bit");
        }
        Ok(())
    }

    pub fn mean_active(&self) -> f64 {
        self.device_count as f64 * self.activation_prob
    }
}

/// Devices active in one slot, ascending. Each device is active
/// independently with probability `activation_prob`; the draw skips over
/// idle devices geometrically, so its cost scales with the active count.
pub fn activate<R: Rng + ?Sized>(traffic: &TrafficModel, rng: &mut R) -> Vec<u64> {
    let p = traffic.activation_prob;
    let n = traffic.device_count;
    if p <= 0.0 || n == 0 {
        return Vec::new();
    }
    if p >= 1.0 {
        return (0..n).collect();
    }
    let gap = Geometric::new(p).expect("p in (0,1)");
    let mut out = Vec::new();
    let mut next = gap.sample(rng);
    while next < n {
        out.push(next);
        next = next.saturating_add(1).saturating_add(gap.sample(rng));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotOutcome {
    Clean,
    SignatureCollision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotReport {
    pub slot: u64,
    pub active: Vec<u64>,
    /// Signature chosen by each active device.
    pub signatures: Vec<usize>,
    /// Devices that share their signature with another device.
    pub collisions: usize,
    pub outcomes: Vec<SlotOutcome>,
}

impl SlotReport {
    pub fn has_collision(&self) -> bool {
        self.collisions > 0
    }

    pub fn clean(&self) -> usize {
        self.outcomes.len() - self.collisions
    }
}

/// Per-device outcome and number of collided devices for a signature choice.
pub fn mark_collisions(signatures: &[usize]) -> (Vec<SlotOutcome>, usize) {
    let outcomes: Vec<SlotOutcome> = collided(signatures)
        .into_iter()
        .map(|c| if c { SlotOutcome::SignatureCollision } else { SlotOutcome::Clean })
        .collect();
    let n = outcomes.iter().filter(|o| **o == SlotOutcome::SignatureCollision).count();
    (outcomes, n)
}

/// Simulate `slots` slots. Slot `s` draws from its own substream, so the
/// reports do not depend on how slots are spread over threads.
pub fn run_aloha_frame(traffic: &TrafficModel, pool_size: usize, slots: u64, seed: u64) -> Result<Vec<SlotReport>> {
    traffic.validate()?;
    if pool_size == 0 {
        return domain("the signature pool must hold at least one signature");
    }
    Ok(map_trials(0..slots, |slot| {
        let mut rng = trial_rng(seed, slot);
        let active = activate(traffic, &mut rng);
        let signatures = pick_signatures(active.len(), pool_size, &mut rng);
        let (outcomes, collisions) = mark_collisions(&signatures);
        SlotReport { slot, active, signatures, collisions, outcomes }
    }))
}

/// Probability that a slot contains at least one signature collision:
/// the birthday probability averaged over the binomial active count.
pub fn predicted_slot_collision_rate(traffic: &TrafficModel, pool_size: usize) -> Result<f64> {
    traffic.validate()?;
    if pool_size == 0 {
        return domain("the signature pool must hold at least one signature");
    }
    let n = traffic.device_count;
    let p = traffic.activation_prob;
    let b = Binomial::new(p, n).map_err(|e| Error::Domain(e.to_string()))?;
    let m = pool_size as u64;
    let upto = m.min(n);
    let body: f64 = (2..=upto).map(|k| b.pmf(k) * collision_probability(k, m)).sum();
    // more than M active devices always collide
    let tail = if n > m { b.sf(m) } else { 0.0 };
    Ok(body + tail)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlohaSummary {
    pub slots: u64,
    pub pool_size: usize,
    pub transmissions: u64,
    pub delivered: u64,
    pub collided_devices: u64,
    pub collision_slots: u64,
    pub mean_active: f64,
    pub expected_active: f64,
    /// Fraction of slots with at least one collision.
    pub collision_rate: f64,
    pub predicted_collision_rate: f64,
    /// Binomial standard error of `collision_rate` under the prediction.
    pub collision_rate_sigma: f64,
    /// Delivered packets per slot.
    pub throughput: f64,
}

impl AlohaSummary {
    /// `|empirical - predicted|` in units of the standard error.
    pub fn deviation_sigmas(&self) -> f64 {
        let d = (self.collision_rate - self.predicted_collision_rate).abs();
        if self.collision_rate_sigma == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / self.collision_rate_sigma
        }
    }
}

pub fn summarize(traffic: &TrafficModel, pool_size: usize, reports: &[SlotReport]) -> Result<AlohaSummary> {
    let slots = reports.len() as u64;
    let transmissions: u64 = reports.iter().map(|r| r.active.len() as u64).sum();
    let collided_devices: u64 = reports.iter().map(|r| r.collisions as u64).sum();
    let collision_slots = reports.iter().filter(|r| r.has_collision()).count() as u64;
    let predicted = predicted_slot_collision_rate(traffic, pool_size)?;
    let per_slot = |x: u64| if slots == 0 { 0.0 } else { x as f64 / slots as f64 };
    Ok(AlohaSummary {
        slots,
        pool_size,
        transmissions,
        delivered: transmissions - collided_devices,
        collided_devices,
        collision_slots,
        mean_active: per_slot(transmissions),
        expected_active: traffic.mean_active(),
        collision_rate: per_slot(collision_slots),
        predicted_collision_rate: predicted,
        collision_rate_sigma: if slots == 0 { 0.0 } else { (predicted * (1.0 - predicted) / slots as f64).sqrt() },
        throughput: per_slot(transmissions - collided_devices),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "DL")]
    Downlink,
    #[serde(rename = "UL")]
    Uplink,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlMessage {
    pub name: String,
    pub direction: Direction,
    pub bits: u64,
}

impl ControlMessage {
    fn new(name: &str, direction: Direction, bits: u64) -> Self {
        Self { name: name.into(), direction, bits }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessScheme {
    GrantBased,
    GrantFree,
}

/// Bits spent on one packet besides its payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadProfile {
    pub name: String,
    pub scheme: AccessScheme,
    /// Control exchanges before the data transmission.
    pub messages: Vec<ControlMessage>,
    pub pilot_bits: u64,
    /// Sizes are placeholders rather than values from a standard.
    #[serde(default)]
    pub assumed: bool,
}

/// Pre-data exchanges a grant-based access needs at least: request,
/// response, identification/setup and grant.
pub const MIN_GRANT_EXCHANGES: usize = 4;
const DEFAULT_CONTROL_BITS: u64 = 60;
const DEFAULT_PILOT_BITS: u64 = 24;

impl OverheadProfile {
    /// Random access request and response, user-ID report and connection
    /// setup, scheduling request and uplink grant, 60 bits each.
    pub fn default_grant_based() -> Self {
        use Direction::*;
        let b = DEFAULT_CONTROL_BITS;
        Self {
            name: "grant_based".into(),
            scheme: AccessScheme::GrantBased,
            messages: vec![
                ControlMessage::new("random_access_request", Uplink, b),
                ControlMessage::new("random_access_response", Downlink, b),
                ControlMessage::new("user_id_and_connection_setup", Uplink, b),
                ControlMessage::new("scheduling_request", Uplink, b),
                ControlMessage::new("uplink_grant", Downlink, b),
            ],
            pilot_bits: DEFAULT_PILOT_BITS,
            assumed: true,
        }
    }

    pub fn default_grant_free() -> Self {
        Self {
            name: "grant_free".into(),
            scheme: AccessScheme::GrantFree,
            messages: Vec::new(),
            pilot_bits: DEFAULT_PILOT_BITS,
            assumed: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme == AccessScheme::GrantBased && self.messages.len() < MIN_GRANT_EXCHANGES {
            return Err(Error::Config(format!(
                "grant-based profile {:?} lists {} control messages, at least {MIN_GRANT_EXCHANGES} are needed",
                self.name,
                self.messages.len()
            )));
        }
        Ok(())
    }

    pub fn control_bits(&self) -> u64 {
        self.messages.iter().map(|m| m.bits).sum()
    }

    /// Copy with every size multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        let mut p = self.clone();
        p.messages.iter_mut().for_each(|m| m.bits *= factor);
        p.pilot_bits *= factor;
        p
    }
}

/// The two profiles compared by [`overhead_compare`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadConfig {
    pub grant_based: OverheadProfile,
    pub grant_free: OverheadProfile,
}

impl Default for OverheadConfig {
    fn default() -> Self {
        Self {
            grant_based: OverheadProfile::default_grant_based(),
            grant_free: OverheadProfile::default_grant_free(),
        }
    }
}

impl OverheadConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("profiles serialize")
    }

    pub fn validate(&self) -> Result<()> {
        if self.grant_based.scheme != AccessScheme::GrantBased || self.grant_free.scheme != AccessScheme::GrantFree {
            return Err(Error::Config("grant_based and grant_free entries have swapped schemes".into()));
        }
        self.grant_based.validate()?;
        self.grant_free.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadTotals {
    pub name: String,
    pub control_bits: u64,
    pub pilot_bits: u64,
    pub payload_bits: u64,
    pub total_bits: u64,
    /// `(total - payload) / payload`.
    pub overhead_ratio: f64,
    pub assumed: bool,
}

fn totals(p: &OverheadProfile, payload_bits: u64) -> OverheadTotals {
    let control = p.control_bits();
    let total = control + p.pilot_bits + payload_bits;
    OverheadTotals {
        name: p.name.clone(),
        control_bits: control,
        pilot_bits: p.pilot_bits,
        payload_bits,
        total_bits: total,
        overhead_ratio: (total - payload_bits) as f64 / payload_bits as f64,
        assumed: p.assumed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadComparison {
    pub grant_based: OverheadTotals,
    pub grant_free: OverheadTotals,
}

pub fn overhead_compare(
    grant_based: &OverheadProfile,
    grant_free: &OverheadProfile,
    payload_bits: u64,
) -> Result<OverheadComparison> {
    if payload_bits == 0 {
        return domain("payload must be at least one bit");
    }
    grant_based.validate()?;
    grant_free.validate()?;
    Ok(OverheadComparison {
        grant_based: totals(grant_based, payload_bits),
        grant_free: totals(grant_free, payload_bits),
    })
}
