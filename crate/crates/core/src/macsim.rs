//! Monte Carlo engine for the independently Rayleigh-faded multiple access
//! channel.
//!
//! A user is in outage when some subset of users containing it asks for more
//! sum rate than the subset's sum capacity supports (joint decoding). With a
//! fixed power split, each fading draw has a single critical total SNR below
//! which that happens, so an outage curve over any SNR grid is a count of
//! critical values above each grid point. The per-trial computation is shared
//! by [`individual_outage_prob`] and [`ThresholdSamples`], which therefore
//! agree exactly for the same seed.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use crate::bounds::{bisect_db, SNR_BRACKET_HI_DB, SNR_BRACKET_LO_DB};
use crate::error::{domain, Error, Result};
use crate::rng::{count_trials, derive_seed, map_trials, trial_rng};
use crate::{from_db, C64};

/// Largest user count for which subsets are enumerated.
pub const MAX_SUBSET_USERS: usize = 24;
const EARLY_EXIT_CHUNK: u64 = 10_000;
const DIVERSITY_TOL_DB: f64 = 0.1;

/// One fading draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// Power gains `|h_i|^2`.
    pub gains: Vec<f64>,
    /// Complex coefficients, when they were drawn.
    pub coeffs: Option<Vec<C64>>,
}

impl ChannelRealization {
    pub fn from_gains(gains: Vec<f64>) -> Self {
        Self { gains, coeffs: None }
    }

    pub fn users(&self) -> usize {
        self.gains.len()
    }
}

/// Circularly-symmetric unit-variance complex Gaussian.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Draw `K` independent Rayleigh coefficients; the gains are Exp(1).
pub fn sample_rayleigh_gains<R: Rng + ?Sized>(users: usize, rng: &mut R) -> ChannelRealization {
    let coeffs: Vec<C64> = (0..users).map(|_| complex_gaussian(rng)).collect();
    ChannelRealization {
        gains: coeffs.iter().map(|h| h.norm_sqr()).collect(),
        coeffs: Some(coeffs),
    }
}

/// Which subsets of users are checked for a sum-rate violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetFamily {
    /// Every subset that contains the given user.
    AllContaining(usize),
    /// Every nonempty subset.
    AllNonempty,
}

fn check_subset_inputs(real: &ChannelRealization, per_user_snr: &[f64], rates: &[f64]) -> Result<usize> {
    let k = real.users();
    if per_user_snr.len() != k || rates.len() != k {
        return Err(Error::Dimension(format!(
            "{} gains, {} snrs, {} rates",
            k,
            per_user_snr.len(),
            rates.len()
        )));
    }
    if k > MAX_SUBSET_USERS {
        return Err(Error::Guard(format!(
            "{k} users exceeds the {MAX_SUBSET_USERS}-user subset enumeration limit"
        )));
    }
    if rates.iter().any(|&r| !(r >= 0.0)) || per_user_snr.iter().any(|&s| !(s >= 0.0)) {
        return domain("rates and snrs must be nonnegative");
    }
    Ok(k)
}

fn subset_masks(k: usize, family: SubsetFamily) -> Result<impl Iterator<Item = u32>> {
    let required = match family {
        SubsetFamily::AllContaining(i) if i >= k => {
            return Err(Error::Dimension(format!("user {i} out of range for {k} users")))
        }
        SubsetFamily::AllContaining(i) => 1u32 << i,
        SubsetFamily::AllNonempty => 0,
    };
    Ok((1u32..(1u32 << k)).filter(move |m| m & required == required))
}

fn subset_violated(mask: u32, real: &ChannelRealization, per_user_snr: &[f64], rates: &[f64]) -> bool {
    let mut rate = 0.0;
    let mut snr = 0.0;
    for j in 0..real.users() {
        if mask & (1 << j) != 0 {
            rate += rates[j];
            snr += per_user_snr[j] * real.gains[j];
        }
    }
    // equality is not an outage
    rate > snr.ln_1p() / LN_2
}

/// Whether any subset in `family` violates its sum-rate constraint.
pub fn joint_outage(
    real: &ChannelRealization,
    per_user_snr: &[f64],
    rates: &[f64],
    family: SubsetFamily,
) -> Result<bool> {
    let k = check_subset_inputs(real, per_user_snr, rates)?;
    Ok(subset_masks(k, family)?.any(|m| subset_violated(m, real, per_user_snr, rates)))
}

/// Number of subsets in `family` that violate their constraint. Summing this
/// indicator over trials gives the sum of per-subset joint outage
/// probabilities, an upper bound on the union event.
pub fn subset_violations(
    real: &ChannelRealization,
    per_user_snr: &[f64],
    rates: &[f64],
    family: SubsetFamily,
) -> Result<u64> {
    let k = check_subset_inputs(real, per_user_snr, rates)?;
    Ok(subset_masks(k, family)?
        .filter(|&m| subset_violated(m, real, per_user_snr, rates))
        .count() as u64)
}

/// Closed-form single-user Rayleigh outage `1 - exp(-(2^R - 1)/snr)`.
pub fn analytic_op_single_user(rate: f64, snr: f64) -> Result<f64> {
    if !(rate > 0.0) || !(snr > 0.0) {
        return domain(format!("rate and snr must be positive, got {rate}, {snr}"));
    }
    Ok(-(-(rate * LN_2).exp_m1() / snr).exp_m1())
}

/// A Monte Carlo probability with its 95% normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpEstimate {
    pub p_hat: f64,
    pub half_width_95: f64,
    pub trials: u64,
}

impl OpEstimate {
    pub fn from_counts(events: u64, trials: u64) -> Self {
        if trials == 0 {
            return Self { p_hat: 0.0, half_width_95: 0.0, trials };
        }
        let p = events as f64 / trials as f64;
        Self {
            p_hat: p,
            half_width_95: 1.96 * (p * (1.0 - p) / trials as f64).sqrt(),
            trials,
        }
    }

    /// Binomial standard error of `p_hat`.
    pub fn std_error(&self) -> f64 {
        self.half_width_95 / 1.96
    }
}

/// One individual-outage experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageQuery {
    pub users: usize,
    /// Target sum rate, shared equally among users with nonzero power.
    pub sum_rate: f64,
    /// Linear total SNR; user `i` receives `total_snr * power_split[i]`.
    pub total_snr: f64,
    /// Fractions of the total power. A zero entry marks an idle user that
    /// neither transmits nor takes part in any rate constraint.
    pub power_split: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    /// Stop once the 95% half-width drops below a tenth of `p_hat`.
    #[serde(default)]
    pub early_exit: bool,
}

impl OutageQuery {
    pub fn equal_split(users: usize, sum_rate: f64, total_snr: f64, trials: u64, seed: u64) -> Result<Self> {
        if users == 0 {
            return domain("at least one user is required");
        }
        let q = Self {
            users,
            sum_rate,
            total_snr,
            power_split: vec![1.0 / users as f64; users],
            trials,
            seed,
            early_exit: false,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return domain("at least one user is required");
        }
        if self.users > MAX_SUBSET_USERS {
            return Err(Error::Guard(format!(
                "{} users exceeds the {MAX_SUBSET_USERS}-user subset enumeration limit",
                self.users
            )));
        }
        if !(self.sum_rate > 0.0) {
            return domain(format!("sum rate must be positive, got {}", self.sum_rate));
        }
        if !(self.total_snr >= 0.0) {
            return domain(format!("total snr must be >= 0, got {}", self.total_snr));
        }
        if self.power_split.len() != self.users {
            return Err(Error::Dimension(format!(
                "{} power fractions for {} users",
                self.power_split.len(),
                self.users
            )));
        }
        if self.power_split.iter().any(|&s| !(s >= 0.0)) {
            return domain("power fractions must be nonnegative");
        }
        let total: f64 = self.power_split.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return domain(format!("power fractions sum to {total}, not 1"));
        }
        Ok(())
    }
}

/// Per-query constants for the critical-SNR computation.
#[derive(Debug, Clone)]
struct ThresholdPlan {
    users: usize,
    /// Position of the tagged user within `active`.
    tagged: usize,
    active: Vec<usize>,
    split: Vec<f64>,
    rate: f64,
    equal_split: bool,
}

impl ThresholdPlan {
    fn new(q: &OutageQuery, user: usize) -> Result<Self> {
        q.validate()?;
        if user >= q.users {
            return Err(Error::Dimension(format!("user {user} out of range for {} users", q.users)));
        }
        if q.power_split[user] <= 0.0 {
            return domain(format!("user {user} has no power allocated"));
        }
        let active: Vec<usize> = (0..q.users).filter(|&i| q.power_split[i] > 0.0).collect();
        let split: Vec<f64> = active.iter().map(|&i| q.power_split[i]).collect();
        let equal_split = split.iter().all(|&s| s == split[0]);
        Ok(Self {
            users: q.users,
            tagged: active.iter().position(|&i| i == user).unwrap(),
            rate: q.sum_rate / active.len() as f64,
            active,
            split,
            equal_split,
        })
    }

    /// Total SNR below which the tagged user is in outage for these gains.
    fn critical_snr(&self, gains: &[f64]) -> f64 {
        let g: Vec<f64> = self.active.iter().map(|&i| gains[i]).collect();
        if self.equal_split {
            // For a fixed subset size the binding subset is the tagged user
            // plus the weakest others.
            let mut others: Vec<f64> = g
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != self.tagged)
                .map(|(_, &x)| x)
                .collect();
            others.sort_unstable_by(f64::total_cmp);
            let share = self.split[0];
            let mut gain_sum = g[self.tagged];
            let mut worst = (self.rate * LN_2).exp_m1() / (share * gain_sum);
            for (m, x) in others.iter().enumerate() {
                gain_sum += x;
                let need = ((m + 2) as f64 * self.rate * LN_2).exp_m1();
                worst = worst.max(need / (share * gain_sum));
            }
            worst
        } else {
            let n = g.len();
            let tag = 1u32 << self.tagged;
            let mut worst = 0.0f64;
            for mask in (1u32..(1u32 << n)).filter(|m| m & tag != 0) {
                let mut power = 0.0;
                for j in 0..n {
                    if mask & (1 << j) != 0 {
                        power += self.split[j] * g[j];
                    }
                }
                let need = (mask.count_ones() as f64 * self.rate * LN_2).exp_m1();
                worst = worst.max(need / power);
            }
            worst
        }
    }

    fn trial_critical_snr(&self, seed: u64, trial: u64) -> f64 {
        let mut rng = trial_rng(seed, trial);
        let real = sample_rayleigh_gains(self.users, &mut rng);
        self.critical_snr(&real.gains)
    }
}

/// Critical total SNR of user `user` for a given fading draw, under the
/// query's rates and power split. `total_snr < critical` is exactly the
/// union-of-subsets outage event.
pub fn critical_total_snr(q: &OutageQuery, user: usize, gains: &[f64]) -> Result<f64> {
    if gains.len() != q.users {
        return Err(Error::Dimension(format!("{} gains for {} users", gains.len(), q.users)));
    }
    Ok(ThresholdPlan::new(q, user)?.critical_snr(gains))
}

/// Per-user rates implied by a query.
pub fn per_user_rates(q: &OutageQuery) -> Vec<f64> {
    let active = q.power_split.iter().filter(|&&s| s > 0.0).count().max(1);
    q.power_split
        .iter()
        .map(|&s| if s > 0.0 { q.sum_rate / active as f64 } else { 0.0 })
        .collect()
}

/// Monte Carlo individual outage probability of `user`.
pub fn individual_outage_prob(q: &OutageQuery, user: usize) -> Result<OpEstimate> {
    let plan = ThresholdPlan::new(q, user)?;
    let total = q.total_snr;
    let mut outages = 0u64;
    let mut done = 0u64;
    while done < q.trials {
        let end = if q.early_exit {
            (done + EARLY_EXIT_CHUNK).min(q.trials)
        } else {
            q.trials
        };
        outages += count_trials(done..end, |t| (total < plan.trial_critical_snr(q.seed, t)) as u64);
        done = end;
        if q.early_exit {
            let est = OpEstimate::from_counts(outages, done);
            if est.p_hat > 0.0 && est.half_width_95 < est.p_hat / 10.0 {
                break;
            }
        }
    }
    Ok(OpEstimate::from_counts(outages, done))
}

/// Sorted critical SNRs of one query's trials: the whole outage-vs-SNR curve
/// for those fading draws.
#[derive(Debug, Clone)]
pub struct ThresholdSamples {
    sorted: Vec<f64>,
}

impl ThresholdSamples {
    /// Draw `q.trials` critical SNRs for `user`. `q.total_snr` is ignored.
    pub fn draw(q: &OutageQuery, user: usize) -> Result<Self> {
        let plan = ThresholdPlan::new(q, user)?;
        let mut sorted = map_trials(0..q.trials, |t| plan.trial_critical_snr(q.seed, t));
        sorted.sort_unstable_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn trials(&self) -> u64 {
        self.sorted.len() as u64
    }

    /// Outage estimate at linear total SNR `total_snr`.
    pub fn outage_prob(&self, total_snr: f64) -> OpEstimate {
        let not_out = self.sorted.partition_point(|&c| c <= total_snr);
        OpEstimate::from_counts((self.sorted.len() - not_out) as u64, self.trials())
    }

    /// Smallest total SNR (dB, to within `tol_db`) in the standard bracket at
    /// which the outage is at most `target`.
    pub fn snr_db_for(&self, target: f64, tol_db: f64) -> Option<f64> {
        bisect_db(SNR_BRACKET_LO_DB, SNR_BRACKET_HI_DB, tol_db, |db| {
            self.outage_prob(from_db(db)).p_hat <= target
        })
    }
}

/// A point of an outage curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub p_hat: f64,
    pub half_width_95: f64,
    pub trials: u64,
}

/// Individual outage vs total SNR (dB) for one user count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCurve {
    pub users: usize,
    pub sum_rate: f64,
    pub points: Vec<CurvePoint>,
}

fn curve_samples(users: usize, sum_rate: f64, trials: u64, seed: u64) -> Result<ThresholdSamples> {
    let q = OutageQuery::equal_split(users, sum_rate, 1.0, trials, derive_seed(seed, users as u64))?;
    ThresholdSamples::draw(&q, 0)
}

/// Individual outage curves for each user count in `user_counts`, equal rates
/// and equal power. All grid points of one curve share the same fading draws.
pub fn op_curve(
    user_counts: &[usize],
    sum_rate: f64,
    snr_grid_db: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<OpCurve>> {
    if snr_grid_db.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("snr grid must be strictly increasing");
    }
    user_counts
        .iter()
        .map(|&k| {
            let samples = curve_samples(k, sum_rate, trials, seed)?;
            Ok(OpCurve {
                users: k,
                sum_rate,
                points: snr_grid_db
                    .iter()
                    .map(|&db| {
                        let e = samples.outage_prob(from_db(db));
                        CurvePoint {
                            x: db,
                            p_hat: e.p_hat,
                            half_width_95: e.half_width_95,
                            trials: e.trials,
                        }
                    })
                    .collect(),
            })
        })
        .collect()
}

/// Total-SNR gain of `K` users over a single user at a target outage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityGain {
    pub users: usize,
    pub sum_rate: f64,
    pub target_op: f64,
    pub single_user_snr_db: f64,
    pub multi_user_snr_db: f64,
    pub gain_db: f64,
}

/// Multi-user diversity gain, each operating point located by bisection to
/// 0.1 dB on its Monte Carlo curve.
pub fn diversity_gain(users: usize, sum_rate: f64, target_op: f64, trials: u64, seed: u64) -> Result<DiversityGain> {
    if !(target_op > 0.0 && target_op < 1.0) {
        return domain(format!("target outage must lie in (0,1), got {target_op}"));
    }
    if target_op * (trials as f64) < 1.0 {
        return domain(format!("target outage {target_op} is below the resolution of {trials} trials"));
    }
    let locate = |k: usize| -> Result<f64> {
        curve_samples(k, sum_rate, trials, seed)?
            .snr_db_for(target_op, DIVERSITY_TOL_DB)
            .ok_or_else(|| {
                Error::NonConvergence(format!(
                    "outage {target_op} not reached for K={k}, R_sum={sum_rate} inside \
                     [{SNR_BRACKET_LO_DB}, {SNR_BRACKET_HI_DB}] dB"
                ))
            })
    };
    let single = locate(1)?;
    let multi = if users == 1 { single } else { locate(users)? };
    Ok(DiversityGain {
        users,
        sum_rate,
        target_op,
        single_user_snr_db: single,
        multi_user_snr_db: multi,
        gain_db: single - multi,
    })
}
