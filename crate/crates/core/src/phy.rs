//! Transmitter-side signal construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{domain, Error, Result};
use crate::C64;

/// Gray-mapped unit-energy QPSK point for a bit pair.
///
/// The first bit selects the sign of the imaginary part and the second the
/// sign of the real part: `00 -> (+1+j)`, `01 -> (-1+j)`, `11 -> (-1-j)`,
/// `10 -> (+1-j)`, all scaled by `1/sqrt(2)`.
#[inline]
pub fn qpsk_point(b0: u8, b1: u8) -> C64 {
    let re = if b1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let im = if b0 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    C64::new(re, im)
}

/// The four QPSK points indexed by `2*b0 + b1`.
pub fn qpsk_constellation() -> [C64; 4] {
    [qpsk_point(0, 0), qpsk_point(0, 1), qpsk_point(1, 0), qpsk_point(1, 1)]
}

/// Map bits (`0`/`1`, even count) to QPSK symbols.
pub fn qpsk_modulate(bits: &[u8]) -> Result<Vec<C64>> {
    if bits.len() % 2 != 0 {
        return domain(format!("QPSK needs an even bit count, got {}", bits.len()));
    }
    if bits.iter().any(|&b| b > 1) {
        return domain("bits must be 0 or 1");
    }
    Ok(bits.chunks_exact(2).map(|p| qpsk_point(p[0], p[1])).collect())
}

/// Hard QPSK decision for one symbol. Zero components decide toward the
/// positive half-plane.
#[inline]
pub fn qpsk_decide(s: C64) -> [u8; 2] {
    [(s.im < 0.0) as u8, (s.re < 0.0) as u8]
}

/// Nearest-point demodulation of a symbol stream.
pub fn qpsk_demod_hard(symbols: &[C64]) -> Vec<u8> {
    symbols.iter().flat_map(|&s| qpsk_decide(s)).collect()
}

/// A unit-norm spreading signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpreadingSequence {
    chips: Vec<C64>,
}

impl SpreadingSequence {
    /// Wrap chips that are already unit norm (within `1e-12`).
    pub fn new(chips: Vec<C64>) -> Result<Self> {
        if chips.is_empty() {
            return domain("a spreading sequence needs at least one chip");
        }
        let energy: f64 = chips.iter().map(|c| c.norm_sqr()).sum();
        if (energy - 1.0).abs() > 1e-12 {
            return domain(format!("sequence energy is {energy}, expected 1"));
        }
        Ok(Self { chips })
    }

    /// Scale arbitrary nonzero chips to unit norm.
    pub fn normalized(chips: Vec<C64>) -> Result<Self> {
        let norm = chips.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return domain("cannot normalize an all-zero sequence");
        }
        Self::new(chips.into_iter().map(|c| c / norm).collect())
    }

    pub fn chips(&self) -> &[C64] {
        &self.chips
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    /// `<self, other>` with `self` conjugated.
    pub fn inner(&self, other: &SpreadingSequence) -> C64 {
        self.chips.iter().zip(&other.chips).map(|(a, b)| a.conj() * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    /// DFT columns; requires `M <= L`.
    Orthogonal,
    /// Unimodular chips drawn from `{+-1 +- j} / sqrt(2L)`, no two equal up
    /// to a common phase.
    RandomQpsk,
    /// Zadoff-Chu sequences: all cyclic shifts of one root, then the next
    /// root. Requires `M <= L * #{roots coprime with L}`.
    ChirpLike,
}

impl std::str::FromStr for PoolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthogonal" => Ok(Self::Orthogonal),
            "random_qpsk" | "random-qpsk" => Ok(Self::RandomQpsk),
            "chirp_like" | "chirp-like" | "chirp" => Ok(Self::ChirpLike),
            other => Err(Error::Config(format!("unknown pool kind {other:?}"))),
        }
    }
}

/// A set of `M` signatures of length `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencePool {
    pub length: usize,
    pub kind: PoolKind,
    pub seed: u64,
    pub sequences: Vec<SpreadingSequence>,
    /// Largest `|<c_i, c_j>|` over distinct pairs (0 for a single sequence).
    pub max_crosscorr: f64,
}

fn pair_crosscorr(seqs: &[SpreadingSequence]) -> impl Iterator<Item = f64> + '_ {
    (0..seqs.len()).flat_map(move |i| ((i + 1)..seqs.len()).map(move |j| seqs[i].inner(&seqs[j]).norm()))
}

fn dft_column(length: usize, m: usize) -> Vec<C64> {
    let scale = 1.0 / (length as f64).sqrt();
    (0..length)
        .map(|l| C64::from_polar(scale, 2.0 * PI * ((m * l) % length) as f64 / length as f64))
        .collect()
}

impl SequencePool {
    /// Build a pool from explicit sequences, measuring its cross-correlation.
    pub fn from_sequences(kind: PoolKind, seed: u64, sequences: Vec<SpreadingSequence>) -> Result<Self> {
        let length = sequences.first().map(|s| s.len()).unwrap_or(0);
        if length == 0 {
            return domain("a pool needs at least one non-empty sequence");
        }
        if sequences.iter().any(|s| s.len() != length) {
            return Err(Error::Dimension("pool sequences differ in length".into()));
        }
        let max_crosscorr = pair_crosscorr(&sequences).fold(0.0, f64::max).min(1.0);
        Ok(Self { length, kind, seed, sequences, max_crosscorr })
    }

    pub fn size(&self) -> usize {
        self.sequences.len()
    }

    /// Mean of `|<c_i, c_j>|^2` over distinct pairs.
    pub fn mean_sq_crosscorr(&self) -> f64 {
        let n = self.size();
        if n < 2 {
            return 0.0;
        }
        let pairs = (n * (n - 1) / 2) as f64;
        pair_crosscorr(&self.sequences).map(|c| c * c).sum::<f64>() / pairs
    }

    /// SHA-256 over the chip values, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.length as u64).to_le_bytes());
        for s in &self.sequences {
            for c in s.chips() {
                h.update(c.re.to_le_bytes());
                h.update(c.im.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&PoolDocument::from(self)).expect("pool serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PoolDocument = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        doc.into_pool()
    }
}

/// On-disk pool format: `{L, M, kind, seed, sequences: [[[re, im], ...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolDocument {
    #[serde(rename = "L")]
    pub length: usize,
    #[serde(rename = "M")]
    pub size: usize,
    pub kind: PoolKind,
    pub seed: u64,
    pub sequences: Vec<Vec<[f64; 2]>>,
}

impl From<&SequencePool> for PoolDocument {
    fn from(p: &SequencePool) -> Self {
        Self {
            length: p.length,
            size: p.size(),
            kind: p.kind,
            seed: p.seed,
            sequences: p
                .sequences
                .iter()
                .map(|s| s.chips().iter().map(|c| [c.re, c.im]).collect())
                .collect(),
        }
    }
}

impl PoolDocument {
    pub fn into_pool(self) -> Result<SequencePool> {
        if self.sequences.len() != self.size {
            return Err(Error::Config(format!(
                "M = {} but {} sequences listed",
                self.size,
                self.sequences.len()
            )));
        }
        if self.sequences.iter().any(|s| s.len() != self.length) {
            return Err(Error::Config(format!("every sequence must have L = {} chips", self.length)));
        }
        let seqs = self
            .sequences
            .into_iter()
            .map(|s| SpreadingSequence::new(s.into_iter().map(|[re, im]| C64::new(re, im)).collect()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Config(e.to_string()))?;
        SequencePool::from_sequences(self.kind, self.seed, seqs)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Deterministic pool of `M` sequences of length `L`.
pub fn generate_sequence_pool(length: usize, size: usize, kind: PoolKind, seed: u64) -> Result<SequencePool> {
    if length == 0 || size == 0 {
        return domain("pool length and size must be positive");
    }
    let sequences = match kind {
        PoolKind::Orthogonal => {
            if size > length {
                return Err(Error::Infeasible(format!(
                    "only {length} orthogonal sequences exist at length {length}, {size} requested"
                )));
            }
            (0..size).map(|m| SpreadingSequence { chips: dft_column(length, m) }).collect()
        }
        PoolKind::RandomQpsk => {
            // up to a common phase there are 4^(L-1) distinct sequences
            if length <= 16 && size as u64 > 4u64.pow(length as u32 - 1) {
                return Err(Error::Infeasible(format!(
                    "only {} phase-distinct QPSK sequences exist at length {length}, {size} requested",
                    4u64.pow(length as u32 - 1)
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let amp = 1.0 / (2.0 * length as f64).sqrt();
            let mut seqs: Vec<SpreadingSequence> = Vec::with_capacity(size);
            while seqs.len() < size {
                let chips = (0..length)
                    .map(|_| {
                        let re = if rng.random::<bool>() { amp } else { -amp };
                        let im = if rng.random::<bool>() { amp } else { -amp };
                        C64::new(re, im)
                    })
                    .collect();
                let candidate = SpreadingSequence { chips };
                // reject phase-rotated copies of sequences already in the pool
                if seqs.iter().all(|s| s.inner(&candidate).norm() < 1.0 - 1e-9) {
                    seqs.push(candidate);
                }
            }
            seqs
        }
        PoolKind::ChirpLike => {
            // Zadoff-Chu roots coprime with L; the L cyclic shifts of one root
            // are mutually orthogonal, so the first L entries form an
            // orthogonal set and later roots add 1/sqrt(L)-correlated ones
            // (at prime L).
            let roots: Vec<usize> = (1..length.max(2)).filter(|&u| gcd(u, length) == 1).collect();
            if size > roots.len() * length {
                return Err(Error::Infeasible(format!(
                    "only {} chirp sequences exist at length {length}, {size} requested",
                    roots.len() * length
                )));
            }
            let scale = 1.0 / (length as f64).sqrt();
            let odd = (length % 2) as f64;
            (0..size)
                .map(|m| {
                    let root = roots[m / length] as f64;
                    let shift = m % length;
                    let chips = (0..length)
                        .map(|l| {
                            let n = ((l + shift) % length) as f64;
                            C64::from_polar(scale, -PI * root * n * (n + odd) / length as f64)
                        })
                        .collect();
                    SpreadingSequence { chips }
                })
                .collect()
        }
    };
    SequencePool::from_sequences(kind, seed, sequences)
}

/// Spread each symbol over the sequence: block `s` is `symbol_s * chips`.
pub fn spread(symbols: &[C64], seq: &SpreadingSequence) -> Vec<C64> {
    symbols.iter().flat_map(|&s| seq.chips().iter().map(move |&c| s * c)).collect()
}

/// Matched-filter despreading: one inner product per `L`-chip block.
pub fn despread(chips: &[C64], seq: &SpreadingSequence) -> Result<Vec<C64>> {
    let l = seq.len();
    if chips.len() % l != 0 {
        return Err(Error::Dimension(format!("{} chips is not a multiple of L = {l}", chips.len())));
    }
    Ok(chips
        .chunks_exact(l)
        .map(|block| seq.chips().iter().zip(block).map(|(c, y)| c.conj() * y).sum())
        .collect())
}

/// One user's slice of a sparse joint modulation/spreading codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmaUserBook {
    /// Occupied resource indices, ascending.
    pub pattern: Vec<usize>,
    /// Full-length codewords; zero outside `pattern`.
    pub codewords: Vec<Vec<C64>>,
}

/// Sparse joint modulation/spreading codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmaCodebook {
    pub resources: usize,
    pub users: Vec<ScmaUserBook>,
}

impl ScmaCodebook {
    pub fn points(&self) -> usize {
        self.users.first().map(|u| u.codewords.len()).unwrap_or(0)
    }

    pub fn bits_per_codeword(&self) -> usize {
        self.points().trailing_zeros() as usize
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }
}

/// Default 6-user, 4-resource codebook with two nonzeros per codeword.
///
/// User `k` takes the `k`-th 2-of-4 resource pattern. Codeword `b` places the
/// QPSK point `b` on the first occupied resource and point `3 - b` on the
/// second, both rotated by `k*pi/6` and scaled to unit codeword energy.
pub fn scma_default_codebook(users: usize, resources: usize, points: usize) -> Result<ScmaCodebook> {
    if (users, resources, points) != (6, 4, 4) {
        return Err(Error::Infeasible(format!(
            "only the 6-user / 4-resource / 4-point codebook is available, got {users}/{resources}/{points}"
        )));
    }
    let qpsk = qpsk_constellation();
    let mut patterns = Vec::new();
    for a in 0..resources {
        for b in (a + 1)..resources {
            patterns.push(vec![a, b]);
        }
    }
    let books = patterns
        .into_iter()
        .enumerate()
        .map(|(k, pattern)| {
            let rot = C64::from_polar(FRAC_1_SQRT_2, k as f64 * PI / 6.0);
            let codewords = (0..points)
                .map(|b| {
                    let mut cw = vec![C64::new(0.0, 0.0); resources];
                    cw[pattern[0]] = rot * qpsk[b];
                    cw[pattern[1]] = rot * qpsk[points - 1 - b];
                    cw
                })
                .collect();
            ScmaUserBook { pattern, codewords }
        })
        .collect();
    Ok(ScmaCodebook { resources, users: books })
}

/// Codeword of `user` for one group of `log2(points)` bits (MSB first).
pub fn scma_encode(bits: &[u8], user: usize, cb: &ScmaCodebook) -> Result<Vec<C64>> {
    let book = cb
        .users
        .get(user)
        .ok_or_else(|| Error::Dimension(format!("user {user} not in a {}-user codebook", cb.user_count())))?;
    if bits.len() != cb.bits_per_codeword() {
        return domain(format!(
            "codebook maps {} bits per codeword, got {}",
            cb.bits_per_codeword(),
            bits.len()
        ));
    }
    if bits.iter().any(|&b| b > 1) {
        return domain("bits must be 0 or 1");
    }
    let index = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    Ok(book.codewords[index].clone())
}

/// Probability that `K` uniform picks among `M` signatures are not all
/// distinct.
pub fn collision_probability(active: u64, pool: u64) -> f64 {
    if pool == 0 || active > pool {
        return 1.0;
    }
    let m = pool as f64;
    let distinct: f64 = (0..active).map(|i| (m - i as f64) / m).product();
    1.0 - distinct
}

/// Uniform i.i.d. signature choice for `active` devices.
pub fn pick_signatures<R: Rng + ?Sized>(active: usize, pool: usize, rng: &mut R) -> Vec<usize> {
    (0..active).map(|_| rng.random_range(0..pool)).collect()
}

/// For each pick, whether another pick chose the same signature.
pub fn collided(picks: &[usize]) -> Vec<bool> {
    let mut counts = std::collections::HashMap::new();
    for &p in picks {
        *counts.entry(p).or_insert(0usize) += 1;
    }
    picks.iter().map(|p| counts[p] > 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn qpsk_mapping() {
        let s = qpsk_modulate(&[0, 0, 0, 1, 1, 1, 1, 0]).unwrap();
        let h = FRAC_1_SQRT_2;
        assert_eq!(s[0], C64::new(h, h));
        assert_eq!(s[1], C64::new(-h, h));
        assert_eq!(s[2], C64::new(-h, -h));
        assert_eq!(s[3], C64::new(h, -h));
        assert!(s.iter().all(|x| (x.norm_sqr() - 1.0).abs() < 1e-15));
        assert!(qpsk_modulate(&[0, 1, 1]).is_err());
        assert!(qpsk_modulate(&[2, 0]).is_err());
    }

    #[test]
    fn qpsk_decisions() {
        assert_eq!(qpsk_demod_hard(&[C64::new(0.0, 0.0)]), vec![0, 0]);
        for bits in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let s = qpsk_modulate(&bits).unwrap();
            assert_eq!(qpsk_demod_hard(&s), bits.to_vec());
            assert_eq!(qpsk_demod_hard(&[-s[0]]), vec![1 - bits[0], 1 - bits[1]]);
        }
    }

    #[test]
    fn orthogonal_pool() {
        let p = generate_sequence_pool(4, 4, PoolKind::Orthogonal, 0).unwrap();
        assert!(p.max_crosscorr < 1e-10);
        assert!(matches!(
            generate_sequence_pool(4, 5, PoolKind::Orthogonal, 0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn random_pool_statistics() {
        let p = generate_sequence_pool(4, 64, PoolKind::RandomQpsk, 1).unwrap();
        assert!(p.max_crosscorr > 0.0 && p.max_crosscorr < 1.0);
        let mean = p.mean_sq_crosscorr();
        assert!((mean - 0.25).abs() < 0.05, "{mean}");
        for s in &p.sequences {
            assert!(s.chips().iter().all(|c| (c.norm_sqr() - 0.25).abs() < 1e-15));
        }
        let again = generate_sequence_pool(4, 64, PoolKind::RandomQpsk, 1).unwrap();
        assert_eq!(p, again);
        assert_eq!(p.fingerprint(), again.fingerprint());
        let other = generate_sequence_pool(4, 64, PoolKind::RandomQpsk, 2).unwrap();
        assert_ne!(p.fingerprint(), other.fingerprint());
        assert!(matches!(
            generate_sequence_pool(4, 65, PoolKind::RandomQpsk, 1),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn chirp_pool_is_unit_norm() {
        let p = generate_sequence_pool(7, 20, PoolKind::ChirpLike, 0).unwrap();
        assert_eq!(p.size(), 20);
        for s in &p.sequences {
            assert!((s.inner(s).re - 1.0).abs() < 1e-12);
        }
        // cyclic shifts of one root are orthogonal
        let one_root = generate_sequence_pool(7, 7, PoolKind::ChirpLike, 0).unwrap();
        assert!(one_root.max_crosscorr < 1e-12, "{}", one_root.max_crosscorr);
        // distinct roots at prime length have |corr| = 1/sqrt(L)
        assert!((p.max_crosscorr - 1.0 / 7f64.sqrt()).abs() < 1e-9, "{}", p.max_crosscorr);
        assert!(generate_sequence_pool(7, 42, PoolKind::ChirpLike, 0).is_ok());
        assert!(matches!(generate_sequence_pool(7, 43, PoolKind::ChirpLike, 0), Err(Error::Infeasible(_))));
        // even length: roots 1, 3 (coprime with 4)
        let even = generate_sequence_pool(4, 8, PoolKind::ChirpLike, 0).unwrap();
        let first: Vec<SpreadingSequence> = even.sequences[..4].to_vec();
        let sub = SequencePool::from_sequences(PoolKind::ChirpLike, 0, first).unwrap();
        assert!(sub.max_crosscorr < 1e-12);
        assert!(generate_sequence_pool(4, 9, PoolKind::ChirpLike, 0).is_err());
    }

    #[test]
    fn pool_json_round_trip() {
        let p = generate_sequence_pool(8, 10, PoolKind::RandomQpsk, 3).unwrap();
        let text = p.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["L"], 8);
        assert_eq!(v["M"], 10);
        assert_eq!(v["kind"], "random_qpsk");
        assert_eq!(v["sequences"][0].as_array().unwrap().len(), 8);
        let back = SequencePool::from_json(&text).unwrap();
        assert_eq!(back, p);
        assert!(SequencePool::from_json(r#"{"L":2,"M":1,"kind":"orthogonal","seed":0,"sequences":[[[1,0],[1,0]]]}"#).is_err());
    }

    #[test]
    fn spreading_round_trip() {
        let seq = generate_sequence_pool(4, 3, PoolKind::RandomQpsk, 9).unwrap().sequences[1].clone();
        let s = C64::new(0.3, -1.1);
        let one = spread(&[s], &seq);
        for (a, c) in one.iter().zip(seq.chips()) {
            assert_eq!(*a, s * c);
        }
        let symbols = qpsk_modulate(&[0, 1, 1, 1, 0, 0, 1, 0]).unwrap();
        let chips = spread(&symbols, &seq);
        assert_eq!(chips.len(), symbols.len() * 4);
        let e_in: f64 = symbols.iter().map(|x| x.norm_sqr()).sum();
        let e_out: f64 = chips.iter().map(|x| x.norm_sqr()).sum();
        assert!((e_in - e_out).abs() < 1e-10);
        let back = despread(&chips, &seq).unwrap();
        assert!(back.iter().zip(&symbols).all(|(a, b)| close(*a, *b, 1e-12)));
        assert!(despread(&chips[..5], &seq).is_err());
    }

    #[test]
    fn scma_default_shape() {
        let cb = scma_default_codebook(6, 4, 4).unwrap();
        let mut patterns: Vec<_> = cb.users.iter().map(|u| u.pattern.clone()).collect();
        patterns.sort();
        patterns.dedup();
        assert_eq!(patterns.len(), 6);
        for r in 0..4 {
            assert_eq!(cb.users.iter().filter(|u| u.pattern.contains(&r)).count(), 3);
        }
        for (k, u) in cb.users.iter().enumerate() {
            let mean: f64 = u.codewords.iter().map(|c| c.iter().map(|x| x.norm_sqr()).sum::<f64>()).sum::<f64>() / 4.0;
            assert!((mean - 1.0).abs() < 1e-10);
            for (i, c) in u.codewords.iter().enumerate() {
                let nz: Vec<usize> = (0..4).filter(|&r| c[r].norm() > 0.0).collect();
                assert_eq!(nz, u.pattern);
                for d in &u.codewords[i + 1..] {
                    assert!(c.iter().zip(d).any(|(a, b)| !close(*a, *b, 1e-9)));
                }
            }
            let encoded = scma_encode(&[1, 0], k, &cb).unwrap();
            assert_eq!(encoded, u.codewords[2]);
        }
        // no resource ever carries more than three users
        for r in 0..4 {
            let load = cb.users.iter().filter(|u| u.codewords[0][r].norm() > 0.0).count();
            assert!(load <= 3);
        }
        assert!(scma_encode(&[1], 0, &cb).is_err());
        assert!(scma_encode(&[1, 0], 6, &cb).is_err());
        assert!(scma_default_codebook(4, 4, 4).is_err());
    }

    #[test]
    fn collision_probability_values() {
        assert_eq!(collision_probability(1, 17), 0.0);
        assert_eq!(collision_probability(0, 17), 0.0);
        assert_eq!(collision_probability(3, 2), 1.0);
        assert!((collision_probability(2, 64) - 1.0 / 64.0).abs() < 1e-15);
        assert_eq!(collided(&[3, 1, 3, 2]), vec![true, false, true, false]);
    }

    #[test]
    fn picked_collisions_follow_birthday_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let trials = 100_000;
        let (k, m) = (5, 32);
        let hits = (0..trials)
            .filter(|_| collided(&pick_signatures(k, m, &mut rng)).iter().any(|&c| c))
            .count();
        let p = collision_probability(k as u64, m as u64);
        let freq = hits as f64 / trials as f64;
        assert!((freq - p).abs() < 3.0 * (p * (1.0 - p) / trials as f64).sqrt(), "{freq} vs {p}");
    }

    proptest! {
        #[test]
        fn modulate_demodulate(bits in proptest::collection::vec(0u8..2, 0..64)) {
            let mut bits = bits;
            if bits.len() % 2 == 1 { bits.pop(); }
            prop_assert_eq!(qpsk_demod_hard(&qpsk_modulate(&bits).unwrap()), bits);
        }
    }
}
