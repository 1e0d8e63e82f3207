//! End-to-end uncoded link simulation.
//!
//! One trial is one block: every user draws a block-fading coefficient and
//! `payload_bits` of data, the symbols are spread (or SCMA encoded), summed,
//! and observed in white noise of variance `10^(-snr_db/10)` per chip. Each
//! user's symbol energy is 1, so `snr_db` is the per-user Es/N0.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_effective_channel, hard_sic, ls_channel_estimate, ml_guard, ml_search, mmse_hard_detect,
    spreading_candidates, InterferenceModel,
};
use crate::error::{domain, Error, Result};
use crate::macsim::complex_gaussian;
use crate::phy::{
    collided, generate_sequence_pool, pick_signatures, qpsk_constellation, qpsk_modulate, PoolKind,
    ScmaCodebook, SequencePool, SpreadingSequence,
};
use crate::rng::{derive_seed, reduce_trials, trial_rng};
use crate::{from_db, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureAssignment {
    /// User `k` always uses pool entry `k`.
    Fixed,
    /// Every user picks a pool entry uniformly at random in every block.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    Spreading { pool: SequencePool, assignment: SignatureAssignment },
    Scma { codebook: ScmaCodebook },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Csi {
    Perfect,
    /// A pilot phase of `pilot_len` unit-energy chips per user precedes the
    /// data. With random signature assignment the pilot index follows the
    /// signature index, so signature collisions are pilot collisions.
    Estimated { pilot_len: usize, pilot_kind: PoolKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Receiver {
    Mmse,
    Sic { max_rounds: usize },
    Ml,
}

impl Receiver {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Mmse => "mmse",
            Self::Sic { .. } => "sic",
            Self::Ml => "ml",
        }
    }
}

impl std::fmt::Display for Receiver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkScenario {
    pub users: usize,
    pub waveform: Waveform,
    pub snr_db: f64,
    /// Bits per user per block.
    pub payload_bits: usize,
    pub csi: Csi,
    /// Rayleigh block fading; unit coefficients otherwise.
    pub fading: bool,
    /// Drop the noise (and interference) but keep the receivers' nominal
    /// noise variance.
    pub noiseless: bool,
    pub interference: Option<InterferenceModel>,
    pub trials: u64,
    pub seed: u64,
}

impl LinkScenario {
    /// Fixed-signature spreading with perfect CSI and Rayleigh fading.
    pub fn spreading(pool: SequencePool, users: usize, snr_db: f64, payload_bits: usize, trials: u64, seed: u64) -> Self {
        Self {
            users,
            waveform: Waveform::Spreading { pool, assignment: SignatureAssignment::Fixed },
            snr_db,
            payload_bits,
            csi: Csi::Perfect,
            fading: true,
            noiseless: false,
            interference: None,
            trials,
            seed,
        }
    }

    pub fn noise_var(&self) -> f64 {
        from_db(-self.snr_db)
    }

    fn chips(&self) -> usize {
        match &self.waveform {
            Waveform::Spreading { pool, .. } => pool.length,
            Waveform::Scma { codebook } => codebook.resources,
        }
    }

    fn bits_per_symbol(&self) -> usize {
        match &self.waveform {
            Waveform::Spreading { .. } => 2,
            Waveform::Scma { codebook } => codebook.bits_per_codeword(),
        }
    }

    /// Check the scenario against a receiver set.
    pub fn validate(&self, receivers: &[Receiver]) -> Result<()> {
        if self.users == 0 {
            return domain("a link needs at least one user");
        }
        if self.trials == 0 {
            return domain("trials must be positive");
        }
        if !self.snr_db.is_finite() {
            return domain(format!("snr must be finite, got {}", self.snr_db));
        }
        if receivers.is_empty() {
            return domain("no receiver selected");
        }
        let bps = self.bits_per_symbol();
        if bps == 0 || self.payload_bits == 0 || self.payload_bits % bps != 0 {
            return domain(format!(
                "payload of {} bits is not a positive multiple of {bps} bits per symbol",
                self.payload_bits
            ));
        }
        match &self.waveform {
            Waveform::Spreading { pool, assignment } => {
                if *assignment == SignatureAssignment::Fixed && self.users > pool.size() {
                    return Err(Error::Infeasible(format!(
                        "fixed assignment needs one signature per user: {} users, pool of {}",
                        self.users,
                        pool.size()
                    )));
                }
            }
            Waveform::Scma { codebook } => {
                if self.users > codebook.user_count() {
                    return Err(Error::Infeasible(format!(
                        "the codebook serves {} users, {} requested",
                        codebook.user_count(),
                        self.users
                    )));
                }
                if let Some(r) = receivers.iter().find(|r| **r != Receiver::Ml) {
                    return Err(Error::Infeasible(format!(
                        "sparse codebook links support only the ml receiver, not {r}"
                    )));
                }
                if self.interference.is_some() {
                    return Err(Error::Infeasible("interference is modeled for spreading links only".into()));
                }
            }
        }
        for r in receivers {
            match r {
                Receiver::Ml => {
                    let points = match &self.waveform {
                        Waveform::Spreading { .. } => 4,
                        Waveform::Scma { codebook } => codebook.points(),
                    };
                    ml_guard(self.users, points)?;
                }
                Receiver::Sic { max_rounds } if *max_rounds == 0 => {
                    return domain("SIC needs at least one round");
                }
                _ => {}
            }
        }
        if let Some(i) = &self.interference {
            if i.dim() != self.chips() {
                return Err(Error::Dimension(format!(
                    "interference covariance is {0}x{0} but the signatures have {1} chips",
                    i.dim(),
                    self.chips()
                )));
            }
        }
        if let Csi::Estimated { pilot_len, pilot_kind } = self.csi {
            if pilot_len == 0 {
                return domain("pilot length must be positive");
            }
            if pilot_kind == PoolKind::Orthogonal && self.pilot_count() > pilot_len {
                return Err(Error::Infeasible(format!(
                    "{} orthogonal pilots do not fit in {pilot_len} chips",
                    self.pilot_count()
                )));
            }
        }
        Ok(())
    }

    fn pilot_count(&self) -> usize {
        match &self.waveform {
            Waveform::Spreading { pool, assignment: SignatureAssignment::Random } => pool.size(),
            _ => self.users,
        }
    }
}

/// Error tallies of one user under one receiver.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserStats {
    pub bits: u64,
    pub bit_errors: u64,
    pub symbols: u64,
    pub symbol_errors: u64,
    pub blocks: u64,
    pub block_errors: u64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl UserStats {
    pub fn ber(&self) -> f64 {
        ratio(self.bit_errors, self.bits)
    }

    pub fn ser(&self) -> f64 {
        ratio(self.symbol_errors, self.symbols)
    }

    pub fn bler(&self) -> f64 {
        ratio(self.block_errors, self.blocks)
    }

    fn add(&mut self, o: &UserStats) {
        self.bits += o.bits;
        self.bit_errors += o.bit_errors;
        self.symbols += o.symbols;
        self.symbol_errors += o.symbol_errors;
        self.blocks += o.blocks;
        self.block_errors += o.block_errors;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub receiver: Receiver,
    pub snr_db: f64,
    pub users: Vec<UserStats>,
    pub trials: u64,
    /// Blocks in which two users shared a signature.
    pub collision_blocks: u64,
    /// Blocks whose true effective channel (or pilot matrix) lost rank.
    pub rank_deficient_blocks: u64,
    pub pool_fingerprint: Option<String>,
}

impl LinkReport {
    /// All users pooled.
    pub fn total(&self) -> UserStats {
        let mut t = UserStats::default();
        self.users.iter().for_each(|u| t.add(u));
        t
    }
}

/// Several receivers run on identical per-block randomness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkComparison {
    pub reports: Vec<LinkReport>,
    /// `symbol_discordance[i][j]`: symbols receiver `i` got wrong and
    /// receiver `j` got right, over all users.
    pub symbol_discordance: Vec<Vec<u64>>,
    pub block_discordance: Vec<Vec<u64>>,
}

impl LinkComparison {
    /// `(errors(j) - errors(i), sigma)` for the paired symbol-error
    /// difference; `sigma` is the standard deviation of the difference under
    /// the hypothesis that the receivers are equally good.
    pub fn symbol_margin(&self, i: usize, j: usize) -> (f64, f64) {
        let d = &self.symbol_discordance;
        ((d[j][i] as f64) - (d[i][j] as f64), ((d[i][j] + d[j][i]) as f64).sqrt())
    }

    pub fn block_margin(&self, i: usize, j: usize) -> (f64, f64) {
        let d = &self.block_discordance;
        ((d[j][i] as f64) - (d[i][j] as f64), ((d[i][j] + d[j][i]) as f64).sqrt())
    }
}

#[derive(Clone)]
struct Tally {
    users: Vec<Vec<UserStats>>,
    sym_disc: Vec<u64>,
    blk_disc: Vec<u64>,
    collisions: u64,
    rank_deficient: u64,
}

impl Tally {
    fn new(receivers: usize, users: usize) -> Self {
        Self {
            users: vec![vec![UserStats::default(); users]; receivers],
            sym_disc: vec![0; receivers * receivers],
            blk_disc: vec![0; receivers * receivers],
            collisions: 0,
            rank_deficient: 0,
        }
    }

    fn merge(mut self, o: Tally) -> Tally {
        for (a, b) in self.users.iter_mut().zip(&o.users) {
            for (x, y) in a.iter_mut().zip(b) {
                x.add(y);
            }
        }
        self.sym_disc.iter_mut().zip(&o.sym_disc).for_each(|(a, b)| *a += b);
        self.blk_disc.iter_mut().zip(&o.blk_disc).for_each(|(a, b)| *a += b);
        self.collisions += o.collisions;
        self.rank_deficient += o.rank_deficient;
        self
    }
}

/// Precomputed per-scenario state.
struct Plan<'a> {
    sc: &'a LinkScenario,
    receivers: &'a [Receiver],
    symbols: usize,
}

fn pilot_matrix(seqs: &[SpreadingSequence], pick: &[usize]) -> DMatrix<C64> {
    let lp = seqs[0].len();
    let scale = (lp as f64).sqrt();
    DMatrix::from_fn(lp, pick.len(), |i, k| seqs[pick[k]].chips()[i] * scale)
}

impl Plan<'_> {
    fn pilot_seqs(&self) -> Result<Option<Vec<SpreadingSequence>>> {
        match self.sc.csi {
            Csi::Perfect => Ok(None),
            Csi::Estimated { pilot_len, pilot_kind } => {
                let pool = generate_sequence_pool(pilot_len, self.sc.pilot_count(), pilot_kind, derive_seed(self.sc.seed, 1))?;
                Ok(Some(pool.sequences))
            }
        }
    }

    fn trial(&self, t: u64, pilot_seqs: Option<&[SpreadingSequence]>) -> Result<Tally> {
        let sc = self.sc;
        let k = sc.users;
        let mut rng = trial_rng(sc.seed, t);
        let mut tally = Tally::new(self.receivers.len(), k);

        let picks: Vec<usize> = match &sc.waveform {
            Waveform::Spreading { pool, assignment: SignatureAssignment::Random } => {
                pick_signatures(k, pool.size(), &mut rng)
            }
            _ => (0..k).collect(),
        };
        if collided(&picks).iter().any(|&c| c) {
            tally.collisions = 1;
        }
        let coeffs: Vec<C64> = if sc.fading {
            (0..k).map(|_| complex_gaussian(&mut rng)).collect()
        } else {
            vec![C64::new(1.0, 0.0); k]
        };
        let bits: Vec<Vec<u8>> = (0..k)
            .map(|_| (0..sc.payload_bits).map(|_| rng.random_range(0..2u8)).collect())
            .collect();
        let l = sc.chips();
        let sigma = sc.noise_var().sqrt();
        let noise_on = !sc.noiseless;

        // transmitted chips per user and symbol interval
        let tx: Vec<Vec<Vec<C64>>> = match &sc.waveform {
            Waveform::Spreading { pool, .. } => bits
                .iter()
                .zip(&picks)
                .map(|(b, &p)| {
                    let chips = pool.sequences[p].chips();
                    qpsk_modulate(b)
                        .expect("validated bits")
                        .into_iter()
                        .map(|s| chips.iter().map(|c| c * s).collect())
                        .collect()
                })
                .collect(),
            Waveform::Scma { codebook } => {
                let bps = codebook.bits_per_codeword();
                bits.iter()
                    .enumerate()
                    .map(|(u, b)| {
                        b.chunks_exact(bps)
                            .map(|g| {
                                let idx = g.iter().fold(0usize, |a, &x| (a << 1) | x as usize);
                                codebook.users[u].codewords[idx].clone()
                            })
                            .collect()
                    })
                    .collect()
            }
        };
        let ys: Vec<Vec<C64>> = (0..self.symbols)
            .map(|n| {
                let mut y = vec![C64::new(0.0, 0.0); l];
                for u in 0..k {
                    for (yi, xi) in y.iter_mut().zip(&tx[u][n]) {
                        *yi += coeffs[u] * xi;
                    }
                }
                if noise_on {
                    for yi in y.iter_mut() {
                        *yi += complex_gaussian(&mut rng) * sigma;
                    }
                    if let Some(i) = &sc.interference {
                        for (yi, v) in y.iter_mut().zip(i.sample(&mut rng)) {
                            *yi += v;
                        }
                    }
                }
                y
            })
            .collect();

        let mut rank_deficient = false;
        let est: Vec<C64> = match pilot_seqs {
            None => coeffs.clone(),
            Some(seqs) => {
                let p = pilot_matrix(seqs, &picks);
                let mut yp: Vec<C64> = (0..p.nrows())
                    .map(|i| (0..k).map(|u| p[(i, u)] * coeffs[u]).sum())
                    .collect();
                if noise_on {
                    yp.iter_mut().for_each(|v| *v += complex_gaussian(&mut rng) * sigma);
                }
                let e = ls_channel_estimate(&yp, &p)?;
                rank_deficient |= e.rank_deficient;
                e.coeffs
            }
        };

        // decisions[r][u]: decided bits of user u under receiver r
        let decisions: Vec<Vec<Vec<u8>>> = match &sc.waveform {
            Waveform::Spreading { pool, .. } => {
                let sigs: Vec<SpreadingSequence> = picks.iter().map(|&p| pool.sequences[p].clone()).collect();
                rank_deficient |= build_effective_channel(&sigs, &coeffs, 1.0)?.is_rank_deficient();
                let ch = build_effective_channel(&sigs, &est, sc.noise_var())?;
                let interf = sc.interference.as_ref();
                self.receivers
                    .iter()
                    .map(|r| match r {
                        Receiver::Mmse => mmse_hard_detect(&ys, &ch, interf),
                        Receiver::Sic { max_rounds } => hard_sic(&ys, &ch, interf, *max_rounds).map(|o| o.bits),
                        Receiver::Ml => {
                            let cands = spreading_candidates(&ch, &qpsk_constellation());
                            Ok(ml_bits(&ys, &cands, 2))
                        }
                    })
                    .collect::<Result<_>>()?
            }
            Waveform::Scma { codebook } => {
                let cands: Vec<Vec<Vec<C64>>> = (0..k)
                    .map(|u| {
                        codebook.users[u]
                            .codewords
                            .iter()
                            .map(|cw| cw.iter().map(|c| est[u] * c).collect())
                            .collect()
                    })
                    .collect();
                vec![ml_bits(&ys, &cands, codebook.bits_per_codeword()); self.receivers.len()]
            }
        };
        if rank_deficient {
            tally.rank_deficient = 1;
        }

        let bps = sc.bits_per_symbol();
        let nr = self.receivers.len();
        // sym_wrong[r][u * symbols + n]
        let mut sym_wrong = vec![vec![false; k * self.symbols]; nr];
        for r in 0..nr {
            for u in 0..k {
                let st = &mut tally.users[r][u];
                let got = &decisions[r][u];
                let want = &bits[u];
                st.bits += sc.payload_bits as u64;
                st.symbols += self.symbols as u64;
                st.blocks += 1;
                st.bit_errors += got.iter().zip(want).filter(|(a, b)| a != b).count() as u64;
                for n in 0..self.symbols {
                    let w = got[n * bps..(n + 1) * bps] != want[n * bps..(n + 1) * bps];
                    sym_wrong[r][u * self.symbols + n] = w;
                    st.symbol_errors += w as u64;
                }
                if got != want {
                    st.block_errors += 1;
                }
            }
        }
        for i in 0..nr {
            for j in 0..nr {
                if i == j {
                    continue;
                }
                tally.sym_disc[i * nr + j] +=
                    sym_wrong[i].iter().zip(&sym_wrong[j]).filter(|(a, b)| **a && !**b).count() as u64;
                for u in 0..k {
                    let bi = tally.users[i][u].block_errors > 0;
                    let bj = tally.users[j][u].block_errors > 0;
                    tally.blk_disc[i * nr + j] += (bi && !bj) as u64;
                }
            }
        }
        Ok(tally)
    }
}

fn ml_bits(ys: &[Vec<C64>], cands: &[Vec<Vec<C64>>], bps: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::with_capacity(bps * ys.len()); cands.len()];
    for y in ys {
        let (idx, _) = ml_search(y, cands);
        for (u, &m) in idx.iter().enumerate() {
            out[u].extend((0..bps).rev().map(|b| ((m >> b) & 1) as u8));
        }
    }
    out
}

/// Run several receivers on the same blocks.
pub fn link_level_compare(sc: &LinkScenario, receivers: &[Receiver]) -> Result<LinkComparison> {
    sc.validate(receivers)?;
    let plan = Plan { sc, receivers, symbols: sc.payload_bits / sc.bits_per_symbol() };
    let pilot_seqs = plan.pilot_seqs()?;
    let nr = receivers.len();
    let tally = reduce_trials(
        0..sc.trials,
        Tally::new(nr, sc.users),
        |t| plan.trial(t, pilot_seqs.as_deref()),
        Tally::merge,
    )?;
    let fingerprint = match &sc.waveform {
        Waveform::Spreading { pool, .. } => Some(pool.fingerprint()),
        Waveform::Scma { .. } => None,
    };
    let reports = receivers
        .iter()
        .zip(tally.users)
        .map(|(&receiver, users)| LinkReport {
            receiver,
            snr_db: sc.snr_db,
            users,
            trials: sc.trials,
            collision_blocks: tally.collisions,
            rank_deficient_blocks: tally.rank_deficient,
            pool_fingerprint: fingerprint.clone(),
        })
        .collect();
    let square = |v: &[u64]| (0..nr).map(|i| v[i * nr..(i + 1) * nr].to_vec()).collect();
    Ok(LinkComparison {
        reports,
        symbol_discordance: square(&tally.sym_disc),
        block_discordance: square(&tally.blk_disc),
    })
}

/// Simulate one receiver. Deterministic per `(scenario, seed)`.
pub fn link_level_run(sc: &LinkScenario, receiver: Receiver) -> Result<LinkReport> {
    Ok(link_level_compare(sc, &[receiver])?.reports.remove(0))
}
