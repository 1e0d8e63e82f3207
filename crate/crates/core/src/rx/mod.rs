//! Receiver algorithms for symbol-level spreading.
//!
//! The received chip vector of one symbol interval is `y = H x + n`, where
//! column `k` of `H` is user `k`'s signature scaled by its fading coefficient
//! and `n` is white noise of variance `sigma^2` per chip plus, optionally,
//! structured inter-cell interference.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::phy::{qpsk_constellation, qpsk_decide, qpsk_point, SpreadingSequence};
use crate::C64;

mod link;

pub use link::{
    link_level_compare, link_level_run, Csi, LinkComparison, LinkReport, LinkScenario, Receiver,
    SignatureAssignment, UserStats, Waveform,
};

/// Largest joint search space of [`ml_joint_detect`], in bits.
pub const ML_MAX_BITS: u32 = 16;
const RANK_TOL: f64 = 1e-9;

fn zero() -> C64 {
    Complex64::new(0.0, 0.0)
}

fn numeric_rank(m: &DMatrix<C64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

/// Composite signature/fading response seen by the receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    /// `L x K`; column `k` is `h_k c_k`.
    pub matrix: DMatrix<C64>,
    /// White-noise variance per complex chip.
    pub noise_var: f64,
}

impl EffectiveChannel {
    pub fn new(matrix: DMatrix<C64>, noise_var: f64) -> Result<Self> {
        if matrix.nrows() == 0 {
            return domain("the effective channel needs at least one chip");
        }
        if !(noise_var >= 0.0) {
            return domain(format!("noise variance must be >= 0, got {noise_var}"));
        }
        Ok(Self { matrix, noise_var })
    }

    pub fn spread_len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn users(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn rank(&self) -> usize {
        numeric_rank(&self.matrix)
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.rank() < self.users()
    }

    /// Whether the columns are pairwise orthogonal within `tol`.
    pub fn has_orthogonal_columns(&self, tol: f64) -> bool {
        let g = self.matrix.adjoint() * &self.matrix;
        (0..g.nrows()).all(|i| (0..g.ncols()).all(|j| i == j || g[(i, j)].norm() <= tol))
    }

    /// `H x`.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.users() {
            return Err(Error::Dimension(format!("{} symbols for {} users", x.len(), self.users())));
        }
        Ok((&self.matrix * DVector::from_column_slice(x)).as_slice().to_vec())
    }
}

/// Column `k` is `coeffs[k] * signatures[k]`.
pub fn build_effective_channel(
    signatures: &[SpreadingSequence],
    coeffs: &[C64],
    noise_var: f64,
) -> Result<EffectiveChannel> {
    if signatures.len() != coeffs.len() {
        return Err(Error::Dimension(format!(
            "{} signatures but {} coefficients",
            signatures.len(),
            coeffs.len()
        )));
    }
    let l = signatures.first().map(|s| s.len()).unwrap_or(0);
    if signatures.iter().any(|s| s.len() != l) {
        return Err(Error::Dimension("signatures differ in length".into()));
    }
    let matrix = DMatrix::from_fn(l, signatures.len(), |i, k| coeffs[k] * signatures[k].chips()[i]);
    EffectiveChannel::new(matrix, noise_var)
}

/// Covariance of inter-cell interference in the spreading-code domain.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceModel {
    pub covariance: DMatrix<C64>,
    /// `F` with `F F^H = covariance`, used to draw interference samples.
    factor: DMatrix<C64>,
}

impl InterferenceModel {
    /// Validate a Hermitian positive semidefinite covariance.
    pub fn new(covariance: DMatrix<C64>) -> Result<Self> {
        if !covariance.is_square() || covariance.nrows() == 0 {
            return Err(Error::Dimension("interference covariance must be square".into()));
        }
        let asym = (&covariance - covariance.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asym > 1e-10 {
            return domain(format!("interference covariance is not Hermitian (deviation {asym:e})"));
        }
        let eig = covariance.clone().symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return domain(format!("interference covariance has eigenvalue {min:e} < 0"));
        }
        let l = covariance.nrows();
        let scale = DMatrix::from_fn(l, l, |i, j| {
            if i == j {
                Complex64::new(eig.eigenvalues[i].max(0.0).sqrt(), 0.0)
            } else {
                zero()
            }
        });
        let factor = &eig.eigenvectors * scale;
        Ok(Self { covariance, factor })
    }

    /// `alpha * sum_i c_i c_i^H + floor * I`: a few dominant interferers with
    /// known signatures on top of a white floor. The rank of the structured
    /// part is the number of interferers.
    pub fn dominant(interferers: &[SpreadingSequence], alpha: f64, floor: f64) -> Result<Self> {
        let l = interferers
            .first()
            .map(|s| s.len())
            .ok_or_else(|| Error::Domain("at least one interferer signature is needed".into()))?;
        if !(alpha >= 0.0 && floor >= 0.0) {
            return domain("interference powers must be nonnegative");
        }
        let mut cov = DMatrix::from_fn(l, l, |i, j| if i == j { Complex64::new(floor, 0.0) } else { zero() });
        for s in interferers {
            if s.len() != l {
                return Err(Error::Dimension("interferer signatures differ in length".into()));
            }
            let c = DVector::from_column_slice(s.chips());
            cov += (&c * c.adjoint()) * Complex64::new(alpha, 0.0);
        }
        Self::new(cov)
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    /// One interference vector drawn from `CN(0, covariance)`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<C64> {
        let z = DVector::from_fn(self.dim(), |_, _| crate::macsim::complex_gaussian(rng));
        (&self.factor * z).as_slice().to_vec()
    }
}

/// Linear MMSE filter bank for one channel.
#[derive(Debug, Clone)]
pub struct MmseFilter {
    /// `K x L`; row `k` is user `k`'s filter `h_k^H A^{-1}`.
    weights: DMatrix<C64>,
    /// Post-MMSE SINR per user.
    sinr: Vec<f64>,
}

impl MmseFilter {
    /// Filters for the columns of `h` against white noise `noise_var` and
    /// optional colored interference.
    pub fn new(h: &DMatrix<C64>, noise_var: f64, interf: Option<&InterferenceModel>) -> Result<Self> {
        let l = h.nrows();
        if let Some(i) = interf {
            if i.dim() != l {
                return Err(Error::Dimension(format!(
                    "interference covariance is {0}x{0} but the channel has {l} chips",
                    i.dim()
                )));
            }
        }
        if !(noise_var > 0.0) && interf.is_none() {
            return domain("MMSE detection needs a positive noise variance");
        }
        let mut a = h * h.adjoint();
        for d in 0..l {
            a[(d, d)] += noise_var;
        }
        if let Some(i) = interf {
            a += &i.covariance;
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Domain("noise-plus-interference covariance is singular".into()))?;
        let a_inv_h = chol.solve(h);
        let weights = a_inv_h.adjoint();
        let sinr = (0..h.ncols())
            .map(|k| {
                let beta = (h.column(k).adjoint() * a_inv_h.column(k))[(0, 0)].re;
                let beta = beta.clamp(0.0, 1.0);
                if beta >= 1.0 {
                    f64::INFINITY
                } else {
                    beta / (1.0 - beta)
                }
            })
            .collect();
        Ok(Self { weights, sinr })
    }

    pub fn sinr(&self) -> &[f64] {
        &self.sinr
    }

    /// Soft estimate of user `row`'s symbol.
    pub fn estimate_one(&self, row: usize, y: &[C64]) -> C64 {
        self.weights.row(row).iter().zip(y).map(|(w, y)| w * y).sum()
    }

    /// Soft estimates of every user's symbol.
    pub fn estimate(&self, y: &[C64]) -> Vec<C64> {
        (0..self.weights.nrows()).map(|k| self.estimate_one(k, y)).collect()
    }
}

fn check_observation(y: &[C64], ch: &EffectiveChannel) -> Result<()> {
    if y.len() != ch.spread_len() {
        return Err(Error::Dimension(format!(
            "observation has {} chips, channel has {}",
            y.len(),
            ch.spread_len()
        )));
    }
    Ok(())
}

/// `H^H (H H^H + sigma^2 I + C)^{-1} y`.
pub fn mmse_detect(y: &[C64], ch: &EffectiveChannel, interf: Option<&InterferenceModel>) -> Result<Vec<C64>> {
    check_observation(y, ch)?;
    Ok(MmseFilter::new(&ch.matrix, ch.noise_var, interf)?.estimate(y))
}

/// Hard QPSK decisions of a block through the linear MMSE filter bank.
pub fn mmse_hard_detect(
    ys: &[Vec<C64>],
    ch: &EffectiveChannel,
    interf: Option<&InterferenceModel>,
) -> Result<Vec<Vec<u8>>> {
    let filt = MmseFilter::new(&ch.matrix, ch.noise_var, interf)?;
    let mut bits = vec![Vec::with_capacity(2 * ys.len()); ch.users()];
    for y in ys {
        check_observation(y, ch)?;
        for (k, b) in bits.iter_mut().enumerate() {
            b.extend(qpsk_decide(filt.estimate_one(k, y)));
        }
    }
    Ok(bits)
}

/// Result of [`hard_sic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SicOutput {
    /// Per user, two bits per symbol interval.
    pub bits: Vec<Vec<u8>>,
    /// Detection order of the first pass.
    pub order: Vec<usize>,
    /// Passes actually run.
    pub rounds: usize,
}

/// Hard-decision successive interference cancellation over a block of
/// observations sharing one channel.
///
/// The first pass repeatedly picks the remaining user with the highest
/// post-MMSE SINR (lowest index on ties), decides its QPSK symbols, and
/// subtracts the regenerated signal. Each further pass re-detects every user
/// in the same order after cancelling all other users' latest decisions, and
/// stops early once no decision changes.
pub fn hard_sic(
    ys: &[Vec<C64>],
    ch: &EffectiveChannel,
    interf: Option<&InterferenceModel>,
    max_rounds: usize,
) -> Result<SicOutput> {
    if max_rounds == 0 {
        return domain("SIC needs at least one round");
    }
    for y in ys {
        check_observation(y, ch)?;
    }
    let k_users = ch.users();
    let h = &ch.matrix;
    let mut residual: Vec<Vec<C64>> = ys.to_vec();
    let mut decisions = vec![vec![zero(); ys.len()]; k_users];
    let mut remaining: Vec<usize> = (0..k_users).collect();
    let mut order = Vec::with_capacity(k_users);

    while !remaining.is_empty() {
        let sub = h.select_columns(remaining.iter());
        let filt = MmseFilter::new(&sub, ch.noise_var, interf)?;
        let mut pos = 0;
        for (i, &s) in filt.sinr().iter().enumerate() {
            if s > filt.sinr()[pos] {
                pos = i;
            }
        }
        let k = remaining.remove(pos);
        order.push(k);
        let col = h.column(k);
        for (t, r) in residual.iter_mut().enumerate() {
            let [b0, b1] = qpsk_decide(filt.estimate_one(pos, r));
            let d = qpsk_point(b0, b1);
            decisions[k][t] = d;
            for (ri, hi) in r.iter_mut().zip(col.iter()) {
                *ri -= hi * d;
            }
        }
    }

    let mut rounds = 1;
    while rounds < max_rounds {
        rounds += 1;
        let mut changed = false;
        for &k in &order {
            let col = h.column(k).into_owned();
            let single = DMatrix::from_column_slice(col.len(), 1, col.as_slice());
            let filt = MmseFilter::new(&single, ch.noise_var, interf)?;
            for (t, y) in ys.iter().enumerate() {
                let mut r = y.clone();
                for j in (0..k_users).filter(|&j| j != k) {
                    let d = decisions[j][t];
                    for (ri, hi) in r.iter_mut().zip(h.column(j).iter()) {
                        *ri -= hi * d;
                    }
                }
                let [b0, b1] = qpsk_decide(filt.estimate_one(0, &r));
                let d = qpsk_point(b0, b1);
                if d != decisions[k][t] {
                    decisions[k][t] = d;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let bits = decisions
        .iter()
        .map(|user| user.iter().flat_map(|&d| qpsk_decide(d)).collect())
        .collect();
    Ok(SicOutput { bits, order, rounds })
}

/// Exhaustive minimum-distance search. `candidates[k][m]` is user `k`'s
/// received contribution when it sends point `m`. Returns the chosen point
/// per user and the residual energy. Ties go to the lexicographically first
/// tuple, user 0 most significant.
pub fn ml_search(y: &[C64], candidates: &[Vec<Vec<C64>>]) -> (Vec<usize>, f64) {
    let k_users = candidates.len();
    let l = y.len();
    if k_users == 0 {
        return (Vec::new(), y.iter().map(|v| v.norm_sqr()).sum());
    }
    // residuals[d] = y minus the contributions of users 0..d
    let mut residuals = vec![y.to_vec(); k_users + 1];
    let mut choice = vec![0usize; k_users];
    let mut best = (vec![0usize; k_users], f64::INFINITY);
    let mut depth = 0usize;
    loop {
        if choice[depth] < candidates[depth].len() {
            let cand = &candidates[depth][choice[depth]];
            let (head, tail) = residuals.split_at_mut(depth + 1);
            for i in 0..l {
                tail[0][i] = head[depth][i] - cand[i];
            }
            if depth + 1 == k_users {
                let metric: f64 = tail[0].iter().map(|v| v.norm_sqr()).sum();
                if metric < best.1 {
                    best = (choice.clone(), metric);
                }
                choice[depth] += 1;
            } else {
                depth += 1;
                choice[depth] = 0;
            }
        } else {
            if depth == 0 {
                break;
            }
            depth -= 1;
            choice[depth] += 1;
        }
    }
    best
}

/// Candidate contributions `h_k c_k s` for every constellation point `s`.
pub fn spreading_candidates(ch: &EffectiveChannel, constellation: &[C64]) -> Vec<Vec<Vec<C64>>> {
    (0..ch.users())
        .map(|k| {
            let col = ch.matrix.column(k);
            constellation.iter().map(|&s| col.iter().map(|h| h * s).collect()).collect()
        })
        .collect()
}

/// Reject joint searches larger than [`ML_MAX_BITS`].
pub fn ml_guard(users: usize, points: usize) -> Result<()> {
    let per_user = (points.max(1) as f64).log2().ceil() as u32;
    let bits = users as u32 * per_user;
    if bits > ML_MAX_BITS {
        return Err(Error::Guard(format!(
            "joint ML search over {users} users x {per_user} bits = {bits} bits exceeds {ML_MAX_BITS}"
        )));
    }
    Ok(())
}

/// Exhaustive joint QPSK detection over a block. Returns two bits per
/// symbol interval for each user.
pub fn ml_joint_detect(ys: &[Vec<C64>], ch: &EffectiveChannel) -> Result<Vec<Vec<u8>>> {
    let constellation = qpsk_constellation();
    ml_guard(ch.users(), constellation.len())?;
    let candidates = spreading_candidates(ch, &constellation);
    let mut bits = vec![Vec::with_capacity(2 * ys.len()); ch.users()];
    for y in ys {
        check_observation(y, ch)?;
        let (idx, _) = ml_search(y, &candidates);
        for (k, &m) in idx.iter().enumerate() {
            bits[k].extend([(m >> 1) as u8, (m & 1) as u8]);
        }
    }
    Ok(bits)
}

/// LS channel estimate plus pilot-collision diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    pub coeffs: Vec<C64>,
    /// The pilot matrix has rank below the user count (for example two users
    /// on the same pilot); the affected estimates are not identifiable.
    pub rank_deficient: bool,
}

/// Regularized least squares `(P^H P + delta I)^{-1} P^H y` with
/// `delta = 1e-9 trace(P^H P) / K`.
pub fn ls_channel_estimate(y_pilot: &[C64], pilots: &DMatrix<C64>) -> Result<ChannelEstimate> {
    let (lp, k) = pilots.shape();
    if lp == 0 || k == 0 {
        return domain("pilot matrix must be non-empty");
    }
    if y_pilot.len() != lp {
        return Err(Error::Dimension(format!("{} pilot observations for {lp} pilot chips", y_pilot.len())));
    }
    let mut gram = pilots.adjoint() * pilots;
    let trace: f64 = (0..k).map(|i| gram[(i, i)].re).sum();
    if !(trace > 0.0) {
        return domain("pilot matrix is all zero");
    }
    let delta = 1e-9 * trace / k as f64;
    for i in 0..k {
        gram[(i, i)] += delta;
    }
    let rhs = pilots.adjoint() * DVector::from_column_slice(y_pilot);
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Domain("regularized pilot Gram matrix is not positive definite".into()))?;
    let est = chol.solve(&rhs);
    Ok(ChannelEstimate {
        coeffs: est.as_slice().to_vec(),
        rank_deficient: numeric_rank(pilots) < k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::macsim::complex_gaussian;
    use crate::phy::{generate_sequence_pool, qpsk_modulate, PoolKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        Complex64::new(re, im)
    }

    fn pool(l: usize, m: usize, kind: PoolKind, seed: u64) -> Vec<SpreadingSequence> {
        generate_sequence_pool(l, m, kind, seed).unwrap().sequences
    }

    fn norm(v: &[C64]) -> f64 {
        v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    fn random_symbols(rng: &mut ChaCha8Rng, n: usize) -> (Vec<u8>, Vec<C64>) {
        let bits: Vec<u8> = (0..2 * n).map(|_| rng.random_range(0..2u8)).collect();
        let s = qpsk_modulate(&bits).unwrap();
        (bits, s)
    }

    #[test]
    fn effective_channel_construction() {
        let sigs = pool(4, 4, PoolKind::Orthogonal, 0);
        let ch = build_effective_channel(&sigs, &[c(1.0, 0.0); 4], 0.1).unwrap();
        let gram = ch.matrix.adjoint() * &ch.matrix;
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - c(want, 0.0)).norm() < 1e-12);
            }
        }
        let scaled = build_effective_channel(&sigs, &[c(1.0, 0.0), c(0.0, 2.0), c(1.0, 0.0), c(1.0, 0.0)], 0.1).unwrap();
        for i in 0..4 {
            assert!((scaled.matrix[(i, 1)] - c(0.0, 2.0) * ch.matrix[(i, 1)]).norm() < 1e-15);
        }
        let dup = build_effective_channel(&[sigs[0].clone(), sigs[0].clone()], &[c(1.0, 0.0); 2], 0.1).unwrap();
        assert!(dup.is_rank_deficient());
        assert!(!ch.is_rank_deficient());
        assert!(build_effective_channel(&sigs, &[c(1.0, 0.0)], 0.1).is_err());
    }

    #[test]
    fn mmse_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sigs = pool(4, 3, PoolKind::Orthogonal, 0);
        let (_, x) = random_symbols(&mut rng, 3);
        let ch = build_effective_channel(&sigs, &[c(1.0, 0.0); 3], 1e-12).unwrap();
        let y = ch.apply(&x).unwrap();
        let est = mmse_detect(&y, &ch, None).unwrap();
        assert!(est.iter().zip(&x).all(|(a, b)| (a - b).norm() < 1e-6));
        let noisy = EffectiveChannel::new(ch.matrix.clone(), 1e6).unwrap();
        let est = mmse_detect(&y, &noisy, None).unwrap();
        assert!(norm(&est) < 1e-3 * norm(&x));
        // scalar MMSE: h=1, sigma^2=1, y=2 -> 1
        let scalar = EffectiveChannel::new(DMatrix::from_element(1, 1, c(1.0, 0.0)), 1.0).unwrap();
        let est = mmse_detect(&[c(2.0, 0.0)], &scalar, None).unwrap();
        assert!((est[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(mmse_detect(&[c(1.0, 0.0); 2], &scalar, None).is_err());
    }

    #[test]
    fn mmse_is_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sigs = pool(4, 3, PoolKind::RandomQpsk, 5);
        let coeffs: Vec<C64> = (0..3).map(|_| complex_gaussian(&mut rng)).collect();
        let ch = build_effective_channel(&sigs, &coeffs, 0.3).unwrap();
        let y: Vec<C64> = (0..4).map(|_| complex_gaussian(&mut rng)).collect();
        // unitary: normalized DFT
        let u = DMatrix::from_fn(4, 4, |i, j| {
            C64::from_polar(0.5, 2.0 * std::f64::consts::PI * (i * j) as f64 / 4.0)
        });
        let rot = EffectiveChannel::new(&u * &ch.matrix, 0.3).unwrap();
        let ry = (&u * DVector::from_column_slice(&y)).as_slice().to_vec();
        let a = mmse_detect(&y, &ch, None).unwrap();
        let b = mmse_detect(&ry, &rot, None).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).norm() < 1e-12));
    }

    #[test]
    fn interference_model_validation() {
        let sigs = pool(4, 2, PoolKind::RandomQpsk, 3);
        let m = InterferenceModel::dominant(&sigs, 2.0, 0.1).unwrap();
        assert_eq!(m.dim(), 4);
        let mut bad = m.covariance.clone();
        bad[(0, 1)] += c(0.5, 0.0);
        assert!(InterferenceModel::new(bad).is_err());
        let neg = DMatrix::from_fn(2, 2, |i, j| if i == j { c(-1.0, 0.0) } else { zero() });
        assert!(InterferenceModel::new(neg).is_err());
        let ch = build_effective_channel(&pool(4, 2, PoolKind::Orthogonal, 0), &[c(1.0, 0.0); 2], 0.1).unwrap();
        assert!(mmse_detect(&[zero(); 4], &ch, Some(&m)).is_ok());
        let small = InterferenceModel::dominant(&pool(2, 1, PoolKind::Orthogonal, 0), 1.0, 0.1).unwrap();
        assert!(mmse_detect(&[zero(); 4], &ch, Some(&small)).is_err());
    }

    #[test]
    fn interference_samples_have_the_model_covariance() {
        let sigs = pool(4, 2, PoolKind::RandomQpsk, 3);
        let m = InterferenceModel::dominant(&sigs, 2.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let mut acc = DMatrix::from_element(4, 4, zero());
        for _ in 0..n {
            let v = DVector::from_vec(m.sample(&mut rng));
            acc += &v * v.adjoint();
        }
        acc /= c(n as f64, 0.0);
        let err = (&acc - &m.covariance).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 0.03, "{err}");
    }

    #[test]
    fn colored_interference_aware_mmse_helps() {
        // A strong interferer sharing the chip space with the desired user:
        // whitening against it must lower the symbol error rate.
        let sigs = pool(4, 2, PoolKind::RandomQpsk, 11);
        let ch = build_effective_channel(&sigs[..1], &[c(1.0, 0.0)], 0.05).unwrap();
        let interf = InterferenceModel::dominant(&sigs[1..], 4.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (mut blind, mut aware) = (0, 0);
        for _ in 0..20_000 {
            let (bits, x) = random_symbols(&mut rng, 1);
            let mut y = ch.apply(&x).unwrap();
            for (yi, ii) in y.iter_mut().zip(interf.sample(&mut rng)) {
                *yi += ii + complex_gaussian(&mut rng) * 0.05f64.sqrt();
            }
            let b = mmse_hard_detect(&[y.clone()], &ch, None).unwrap();
            let a = mmse_hard_detect(&[y], &ch, Some(&interf)).unwrap();
            blind += (b[0] != bits) as u32;
            aware += (a[0] != bits) as u32;
        }
        assert!(aware < blind, "aware {aware} blind {blind}");
    }

    #[test]
    fn sic_noiseless_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let one = build_effective_channel(&pool(4, 1, PoolKind::RandomQpsk, 1), &[c(0.3, -0.8)], 1e-12).unwrap();
        let (bits, x) = random_symbols(&mut rng, 16);
        let ys: Vec<Vec<C64>> = x.iter().map(|&s| one.apply(&[s]).unwrap()).collect();
        assert_eq!(hard_sic(&ys, &one, None, 1).unwrap().bits[0], bits);

        let two = build_effective_channel(&pool(4, 2, PoolKind::Orthogonal, 0), &[c(1.0, 0.0), c(0.0, 0.5)], 1e-12).unwrap();
        let (b0, x0) = random_symbols(&mut rng, 16);
        let (b1, x1) = random_symbols(&mut rng, 16);
        let ys: Vec<Vec<C64>> = (0..16).map(|t| two.apply(&[x0[t], x1[t]]).unwrap()).collect();
        let out = hard_sic(&ys, &two, None, 3).unwrap();
        assert_eq!(out.bits, vec![b0, b1]);
        assert_eq!(out.order, vec![0, 1]);
        assert!(hard_sic(&ys, &two, None, 0).is_err());
    }

    #[test]
    fn single_user_sic_is_mmse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ch = build_effective_channel(&pool(4, 1, PoolKind::RandomQpsk, 2), &[c(0.7, 0.2)], 0.5).unwrap();
        let ys: Vec<Vec<C64>> = (0..200).map(|_| (0..4).map(|_| complex_gaussian(&mut rng)).collect()).collect();
        let sic = hard_sic(&ys, &ch, None, 1).unwrap();
        let lin = mmse_hard_detect(&ys, &ch, None).unwrap();
        assert_eq!(sic.bits, lin);
        let direct: Vec<u8> = ys
            .iter()
            .flat_map(|y| qpsk_decide(mmse_detect(y, &ch, None).unwrap()[0]))
            .collect();
        assert_eq!(sic.bits[0], direct);
    }

    #[test]
    fn sic_beats_one_shot_mmse_on_the_weak_user() {
        // |<c0, c1>| = 0.5, 20 dB power imbalance, weak user at 10 dB
        let c0 = SpreadingSequence::normalized(vec![c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let c1 = SpreadingSequence::normalized(vec![c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)]).unwrap();
        assert!((c0.inner(&c1).norm() - 0.5).abs() < 1e-12);
        let noise_var = 0.1;
        let ch = build_effective_channel(&[c0, c1], &[c(10.0, 0.0), c(1.0, 0.0)], noise_var).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let (mut sic_err, mut mmse_err, mut only_sic, mut only_mmse) = (0u64, 0u64, 0u64, 0u64);
        let block = 100;
        for _ in 0..n / block {
            let (_, x0) = random_symbols(&mut rng, block);
            let (b1, x1) = random_symbols(&mut rng, block);
            let ys: Vec<Vec<C64>> = (0..block)
                .map(|t| {
                    let mut y = ch.apply(&[x0[t], x1[t]]).unwrap();
                    y.iter_mut().for_each(|v| *v += complex_gaussian(&mut rng) * noise_var.sqrt());
                    y
                })
                .collect();
            let s = hard_sic(&ys, &ch, None, 1).unwrap();
            let m = mmse_hard_detect(&ys, &ch, None).unwrap();
            for t in 0..block {
                let se = s.bits[1][2 * t..2 * t + 2] != b1[2 * t..2 * t + 2];
                let me = m[1][2 * t..2 * t + 2] != b1[2 * t..2 * t + 2];
                sic_err += se as u64;
                mmse_err += me as u64;
                only_sic += (se && !me) as u64;
                only_mmse += (me && !se) as u64;
            }
        }
        let diff = mmse_err as f64 - sic_err as f64;
        let sd = ((only_sic + only_mmse) as f64).sqrt();
        assert!(diff > 3.0 * sd, "mmse {mmse_err} sic {sic_err} sd {sd}");
    }

    #[test]
    fn ml_noiseless_and_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sigs = pool(4, 3, PoolKind::RandomQpsk, 8);
        let coeffs: Vec<C64> = (0..3).map(|_| complex_gaussian(&mut rng)).collect();
        let ch = build_effective_channel(&sigs, &coeffs, 1e-12).unwrap();
        assert!(!ch.is_rank_deficient());
        let data: Vec<(Vec<u8>, Vec<C64>)> = (0..3).map(|_| random_symbols(&mut rng, 20)).collect();
        let ys: Vec<Vec<C64>> = (0..20)
            .map(|t| ch.apply(&[data[0].1[t], data[1].1[t], data[2].1[t]]).unwrap())
            .collect();
        let bits = ml_joint_detect(&ys, &ch).unwrap();
        for k in 0..3 {
            assert_eq!(bits[k], data[k].0);
        }
        let perm = [2usize, 0, 1];
        let pch = EffectiveChannel::new(ch.matrix.select_columns(perm.iter()), 1e-12).unwrap();
        let pbits = ml_joint_detect(&ys, &pch).unwrap();
        for (i, &k) in perm.iter().enumerate() {
            assert_eq!(pbits[i], bits[k]);
        }
    }

    #[test]
    fn ml_result_is_the_exhaustive_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sigs = pool(4, 3, PoolKind::RandomQpsk, 9);
        let coeffs: Vec<C64> = (0..3).map(|_| complex_gaussian(&mut rng)).collect();
        let ch = build_effective_channel(&sigs, &coeffs, 0.5).unwrap();
        let q = qpsk_constellation();
        let cands = spreading_candidates(&ch, &q);
        for _ in 0..50 {
            let y: Vec<C64> = (0..4).map(|_| complex_gaussian(&mut rng)).collect();
            let (best, metric) = ml_search(&y, &cands);
            let mut min = f64::INFINITY;
            for a in 0..4 {
                for b in 0..4 {
                    for d in 0..4 {
                        let r = ch.apply(&[q[a], q[b], q[d]]).unwrap();
                        let m: f64 = y.iter().zip(&r).map(|(u, v)| (u - v).norm_sqr()).sum();
                        min = min.min(m);
                    }
                }
            }
            assert!((metric - min).abs() < 1e-12);
            let r = ch.apply(&[q[best[0]], q[best[1]], q[best[2]]]).unwrap();
            let m: f64 = y.iter().zip(&r).map(|(u, v)| (u - v).norm_sqr()).sum();
            assert!((m - min).abs() < 1e-12);
        }
    }

    #[test]
    fn ml_ties_pick_the_first_tuple() {
        let ch = EffectiveChannel::new(DMatrix::from_element(2, 2, zero()), 1.0).unwrap();
        let bits = ml_joint_detect(&[vec![c(1.0, 1.0), zero()]], &ch).unwrap();
        assert_eq!(bits, vec![vec![0, 0], vec![0, 0]]);
    }

    #[test]
    fn ml_guard_limits_search() {
        assert!(ml_guard(8, 4).is_ok());
        assert!(matches!(ml_guard(9, 4), Err(Error::Guard(_))));
        assert!(matches!(ml_guard(16, 4), Err(Error::Guard(_))));
        let ch = EffectiveChannel::new(DMatrix::from_element(4, 9, c(0.1, 0.0)), 1.0).unwrap();
        assert!(ml_joint_detect(&[vec![zero(); 4]], &ch).is_err());
    }

    #[test]
    fn zero_power_column_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sigs = pool(4, 3, PoolKind::RandomQpsk, 4);
        let coeffs: Vec<C64> = (0..2).map(|_| complex_gaussian(&mut rng)).collect();
        let ch = build_effective_channel(&sigs[..2], &coeffs, 0.2).unwrap();
        let padded = build_effective_channel(&sigs, &[coeffs[0], coeffs[1], zero()], 0.2).unwrap();
        let ys: Vec<Vec<C64>> = (0..300).map(|_| (0..4).map(|_| complex_gaussian(&mut rng)).collect()).collect();
        for y in &ys {
            let a = mmse_detect(y, &ch, None).unwrap();
            let b = mmse_detect(y, &padded, None).unwrap();
            assert!((a[0] - b[0]).norm() < 1e-9 && (a[1] - b[1]).norm() < 1e-9);
        }
        let s1 = hard_sic(&ys, &ch, None, 2).unwrap();
        let s2 = hard_sic(&ys, &padded, None, 2).unwrap();
        assert_eq!(s1.bits[..], s2.bits[..2]);
        let m1 = ml_joint_detect(&ys, &ch).unwrap();
        let m2 = ml_joint_detect(&ys, &padded).unwrap();
        assert_eq!(m1[..], m2[..2]);
        let l1 = mmse_hard_detect(&ys, &ch, None).unwrap();
        let l2 = mmse_hard_detect(&ys, &padded, None).unwrap();
        assert_eq!(l1[..], l2[..2]);
    }

    fn pilot_matrix(seqs: &[SpreadingSequence]) -> DMatrix<C64> {
        let l = seqs[0].len();
        DMatrix::from_fn(l, seqs.len(), |i, k| seqs[k].chips()[i])
    }

    #[test]
    fn ls_estimation_is_exact_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seqs in [pool(8, 4, PoolKind::Orthogonal, 0), pool(8, 6, PoolKind::RandomQpsk, 2)] {
            let p = pilot_matrix(&seqs);
            let h: Vec<C64> = (0..seqs.len()).map(|_| complex_gaussian(&mut rng)).collect();
            let y = (&p * DVector::from_column_slice(&h)).as_slice().to_vec();
            let est = ls_channel_estimate(&y, &p).unwrap();
            assert!(!est.rank_deficient);
            assert!(est.coeffs.iter().zip(&h).all(|(a, b)| (a - b).norm() < 1e-6));
        }
    }

    #[test]
    fn ls_flags_pilot_collisions() {
        let seqs = pool(8, 3, PoolKind::RandomQpsk, 2);
        let p = pilot_matrix(&[seqs[0].clone(), seqs[1].clone(), seqs[0].clone()]);
        let est = ls_channel_estimate(&[c(1.0, 0.0); 8], &p).unwrap();
        assert!(est.rank_deficient);
        assert!(ls_channel_estimate(&[c(1.0, 0.0); 7], &p).is_err());
        assert!(ls_channel_estimate(&[zero(); 2], &DMatrix::from_element(2, 1, zero())).is_err());
    }

    #[test]
    fn non_orthogonal_pilots_cost_estimation_accuracy() {
        let orth = pilot_matrix(&pool(4, 4, PoolKind::Orthogonal, 0));
        let non = pilot_matrix(&pool(4, 4, PoolKind::RandomQpsk, 21));
        let noise_var: f64 = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let trials = 10_000;
        let (mut e_orth, mut e_non) = (Vec::new(), Vec::new());
        for _ in 0..trials {
            let h: Vec<C64> = (0..4).map(|_| complex_gaussian(&mut rng)).collect();
            let n: Vec<C64> = (0..4).map(|_| complex_gaussian(&mut rng) * noise_var.sqrt()).collect();
            let hv = DVector::from_column_slice(&h);
            for (p, acc) in [(&orth, &mut e_orth), (&non, &mut e_non)] {
                let y: Vec<C64> = (p * &hv).iter().zip(&n).map(|(a, b)| a + b).collect();
                let est = ls_channel_estimate(&y, p).unwrap();
                acc.push(est.coeffs.iter().zip(&h).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>());
            }
        }
        let diffs: Vec<f64> = e_non.iter().zip(&e_orth).map(|(a, b)| a - b).collect();
        let mean = diffs.iter().sum::<f64>() / trials as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        assert!(mean > 3.0 * (var / trials as f64).sqrt(), "mean diff {mean}");
    }
}
