//! Bloom filter sized by the textbook optimum, the signed CRL-piece
//! fingerprint built on it, and the analytical calculators for forgery cost,
//! fingerprint size, and clock-sync period.

use alloc::vec;
use alloc::vec::Vec;

use crate::crypto::{sha256, Digest, Signature, SigningKey, VerifyingKey};
use crate::error::Error;

/// Plain Bloom filter. Bits are stored packed MSB-first, matching the wire
/// layout byte for byte.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomFilter {
    m: u32,
    k: u32,
    bits: Vec<u8>,
    n_inserted: u32,
}

/// Optimal parameters for `n` items at target false-positive probability `p`:
/// `m = ceil(-n ln p / (ln 2)^2)` bits and `k = ceil(-log2 p)` hash functions.
pub fn bf_params(n: u64, p: f64) -> Result<(u64, u32), Error> {
    if n == 0 {
        return Err(Error::Param("bf_params: n must be >= 1"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Param("bf_params: p must be in (0, 1)"));
    }
    let ln2 = core::f64::consts::LN_2;
    let m = libm::ceil(-(n as f64) * libm::log(p) / (ln2 * ln2)) as u64;
    let k = libm::ceil(-libm::log2(p)) as u32;
    Ok((m.max(1), k.max(1)))
}

/// Exact false-positive probability `(1 - (1 - 1/m)^{kn})^k`.
pub fn false_positive_prob(m: u64, k: u32, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let kn = k as f64 * n as f64;
    // (1 - 1/m)^{kn} via log1p for accuracy at large m.
    let miss = libm::exp(kn * libm::log1p(-1.0 / m as f64));
    libm::exp(k as f64 * libm::log(1.0 - miss))
}

/// Expected seconds for a query-only forgery: `k / (p * hashrate)` hash
/// evaluations at `hashrate` per second, where one candidate costs `k` hashes
/// and succeeds with probability `p`.
pub fn attack_time_secs(p: f64, k: u32, hashrate: f64) -> f64 {
    k as f64 / (p * hashrate)
}

/// How often a clock of the given ppm accuracy must resynchronize to stay
/// within `max_error_secs`.
pub fn sync_period_secs(clock_accuracy_ppm: f64, max_error_secs: f64) -> f64 {
    max_error_secs / (clock_accuracy_ppm * 1e-6)
}

impl BloomFilter {
    pub fn new(m: u32, k: u32) -> Result<Self, Error> {
        if m == 0 || k == 0 {
            return Err(Error::Param("bloom filter needs m >= 1 and k >= 1"));
        }
        Ok(BloomFilter {
            m,
            k,
            bits: vec![0u8; m.div_ceil(8) as usize],
            n_inserted: 0,
        })
    }

    /// Filter sized by [`bf_params`] for `n` items at target rate `p`.
    pub fn with_params(n: u64, p: f64) -> Result<Self, Error> {
        let (m, k) = bf_params(n, p)?;
        if m > u32::MAX as u64 {
            return Err(Error::Param("bloom filter size exceeds u32 bits"));
        }
        Self::new(m as u32, k)
    }

    pub fn from_parts(m: u32, k: u32, bits: Vec<u8>, n_inserted: u32) -> Result<Self, Error> {
        if m == 0 || k == 0 || bits.len() != m.div_ceil(8) as usize {
            return Err(Error::Param("bloom filter parts inconsistent"));
        }
        Ok(BloomFilter { m, k, bits, n_inserted })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn n_inserted(&self) -> u32 {
        self.n_inserted
    }

    pub fn bit_bytes(&self) -> &[u8] {
        &self.bits
    }

    // Probe positions are drawn from a splitmix64 stream seeded by the first
    // 8 bytes of SHA-256(item), reduced by 128-bit multiply. Unlike plain
    // double hashing, whose arithmetic-progression probes measurably inflate
    // the false-positive rate at small m (and collapse when k approaches m),
    // this keeps probes indistinguishable from the i.i.d. model the
    // closed-form rate assumes. Part of the wire contract (docs/wire.md).
    fn probes(&self, item: &[u8]) -> impl Iterator<Item = u32> {
        let d = sha256(item);
        let mut state = u64::from_be_bytes(d.0[0..8].try_into().expect("8 bytes"));
        let m = self.m as u64;
        let k = self.k;
        let mut j = 0;
        core::iter::from_fn(move || {
            if j == k {
                return None;
            }
            j += 1;
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            Some(((z as u128 * m as u128) >> 64) as u32)
        })
    }

    pub fn insert(&mut self, item: &[u8]) {
        let positions: Vec<u32> = self.probes(item).collect();
        for pos in positions {
            self.bits[(pos / 8) as usize] |= 0x80 >> (pos % 8);
        }
        self.n_inserted += 1;
    }

    /// True iff every probe bit is set; inserted items always return true.
    pub fn query(&self, item: &[u8]) -> bool {
        let mut hit = true;
        for pos in self.probes(item) {
            if self.bits[(pos / 8) as usize] & (0x80 >> (pos % 8)) == 0 {
                hit = false;
                break;
            }
        }
        hit
    }

    pub fn popcount(&self) -> u32 {
        self.bits.iter().map(|b| b.count_ones()).sum()
    }
}

/// Signed Bloom filter over the digests of one Γ_CRL's base pieces. This is
/// the per-Γ_CRL authenticator vehicles test pieces against.
#[derive(Clone, Debug)]
pub struct Fingerprint {
    pub gamma_crl_index: u32,
    pub crl_version: u32,
    pub piece_count: u32,
    pub filter: BloomFilter,
    pub signature: Signature,
}

impl Fingerprint {
    /// Build and sign a fingerprint over the given piece digests. The filter
    /// is sized for the actual piece count at target rate `p`; an empty piece
    /// set still yields a valid (all-zero) signed filter.
    pub fn build(
        gamma_crl_index: u32,
        crl_version: u32,
        piece_digests: &[Digest],
        target_p: f64,
        issuer_key: &SigningKey,
    ) -> Result<Self, Error> {
        let n = piece_digests.len().max(1) as u64;
        let mut filter = BloomFilter::with_params(n, target_p)?;
        for d in piece_digests {
            filter.insert(&d.0);
        }
        let mut fp = Fingerprint {
            gamma_crl_index,
            crl_version,
            piece_count: piece_digests.len() as u32,
            filter,
            signature: Signature { scheme: issuer_key.scheme(), bytes: Vec::new() },
        };
        fp.signature = issuer_key.sign(&fp.signed_payload());
        Ok(fp)
    }

    /// Bytes covered by the signature: (Γ_CRL index, version, piece count,
    /// m, k, bit array), fixed order, big-endian.
    pub fn signed_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + self.filter.bits.len());
        out.extend_from_slice(&self.gamma_crl_index.to_be_bytes());
        out.extend_from_slice(&self.crl_version.to_be_bytes());
        out.extend_from_slice(&self.piece_count.to_be_bytes());
        out.extend_from_slice(&self.filter.m.to_be_bytes());
        out.extend_from_slice(&(self.filter.k as u16).to_be_bytes());
        out.extend_from_slice(&self.filter.bits);
        out
    }

    pub fn verify(&self, issuer_pub: &VerifyingKey) -> bool {
        issuer_pub.verify(&self.signed_payload(), &self.signature)
    }

    pub fn contains_piece(&self, piece_digest: &Digest) -> bool {
        self.filter.query(&piece_digest.0)
    }
}
