//! Cryptographic building blocks: SHA-256 digests, domain-separated hash
//! chains, HMAC-SHA-256, and a pluggable signature scheme.
//!
//! Two one-byte domain tags keep the chain-step hash and the MAC-key
//! derivation hash distinct primitives over the single underlying SHA-256:
//! `0x00` for chain steps, `0x01` for MAC keys. Content digests (piece
//! hashes fed to the Bloom filter) use plain untagged SHA-256.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use hmac::{Hmac, Mac};
use p256::ecdsa;
use p256::ecdsa::signature::hazmat::PrehashVerifier;
use p256::ecdsa::signature::{Signer, Verifier};
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256};
use subtle::ConstantTimeEq;

pub const DIGEST_LEN: usize = 32;

const TAG_CHAIN: u8 = 0x00;
const TAG_MAC_KEY: u8 = 0x01;

/// 32-byte opaque hash value. Equality is byte equality.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        let arr: [u8; DIGEST_LEN] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..")
    }
}

/// Plain SHA-256 over arbitrary content (piece digests, signing payloads).
pub fn sha256(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// One chain step: `SHA-256(0x00 || d)`.
pub fn chain_step(d: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([TAG_CHAIN]);
    h.update(d.0);
    Digest(h.finalize().into())
}

/// `chain_step` applied `n` times.
pub fn chain_step_n(d: &Digest, n: u32) -> Digest {
    let mut cur = *d;
    for _ in 0..n {
        cur = chain_step(&cur);
    }
    cur
}

/// MAC-key derivation hash: `SHA-256(0x01 || d)`.
pub fn mac_key_hash(d: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([TAG_MAC_KEY]);
    h.update(d.0);
    Digest(h.finalize().into())
}

/// Two-input chain hash used for serial-number derivation:
/// `SHA-256(0x00 || a || b)`.
pub fn chain_hash_pair(a: &Digest, b: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([TAG_CHAIN]);
    h.update(a.0);
    h.update(b.0);
    Digest(h.finalize().into())
}

/// Forward hash chain `[seed, H(seed), H²(seed), …, H^length(seed)]`.
///
/// The output has `length + 1` elements; `length == 0` returns just the seed.
pub fn hash_chain(seed: Digest, length: u32) -> Vec<Digest> {
    let mut out = Vec::with_capacity(length as usize + 1);
    out.push(seed);
    for _ in 0..length {
        let next = chain_step(out.last().expect("nonempty"));
        out.push(next);
    }
    out
}

/// Per-interval MAC key, derived only through [`derive_interval_keys`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MacKey {
    pub bytes: [u8; DIGEST_LEN],
    pub interval_index: u32,
}

/// From the interval-`i` chain key, derive the previous chain key
/// `K_{i-1} = H(K_i)` and the MAC key `K'_i = H'(K_i)`.
pub fn derive_interval_keys(k_i: &Digest, i: u32) -> (Digest, MacKey) {
    debug_assert!(i >= 1);
    let k_prev = chain_step(k_i);
    let mac_key = MacKey {
        bytes: mac_key_hash(k_i).0,
        interval_index: i,
    };
    (k_prev, mac_key)
}

/// True iff hashing `candidate` down `i` chain steps reproduces the anchor.
pub fn verify_key_against_anchor(candidate: &Digest, i: u32, anchor: &Digest) -> bool {
    chain_step_n(candidate, i) == *anchor
}

pub fn mac_compute(key: &MacKey, payload: &[u8]) -> Digest {
    let mut mac = Hmac::<Sha256>::new_from_slice(&key.bytes).expect("hmac accepts any key length");
    mac.update(payload);
    Digest(mac.finalize().into_bytes().into())
}

/// Constant-time tag comparison.
pub fn mac_verify(key: &MacKey, payload: &[u8], tag: &Digest) -> bool {
    let expected = mac_compute(key, payload);
    expected.0.ct_eq(&tag.0).into()
}

/// Signature scheme identifier. The mock scheme exists for large simulations
/// and is flagged by its wire id so outputs can never be mistaken for ECDSA.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SchemeId {
    EcdsaP256,
    Mock,
}

impl SchemeId {
    pub fn wire_id(self) -> u8 {
        match self {
            SchemeId::EcdsaP256 => 1,
            SchemeId::Mock => 2,
        }
    }

    pub fn from_wire_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(SchemeId::EcdsaP256),
            2 => Some(SchemeId::Mock),
            _ => None,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Signature {
    pub scheme: SchemeId,
    pub bytes: Vec<u8>,
}

const MOCK_SIG_LEN: usize = 16;

/// Signing key for one of the supported schemes.
///
/// The mock scheme is a truncated keyed hash; its "verifying key" is the same
/// secret, so it authenticates nothing against an adversary and is only for
/// simulation throughput.
#[derive(Clone)]
pub enum SigningKey {
    EcdsaP256(ecdsa::SigningKey),
    Mock([u8; 32]),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum VerifyingKey {
    EcdsaP256(ecdsa::VerifyingKey),
    Mock([u8; 32]),
}

impl SigningKey {
    pub fn generate<R: RngCore + CryptoRng>(scheme: SchemeId, rng: &mut R) -> Self {
        match scheme {
            SchemeId::EcdsaP256 => SigningKey::EcdsaP256(ecdsa::SigningKey::random(rng)),
            SchemeId::Mock => {
                let mut k = [0u8; 32];
                rng.fill_bytes(&mut k);
                SigningKey::Mock(k)
            }
        }
    }

    pub fn scheme(&self) -> SchemeId {
        match self {
            SigningKey::EcdsaP256(_) => SchemeId::EcdsaP256,
            SigningKey::Mock(_) => SchemeId::Mock,
        }
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        match self {
            SigningKey::EcdsaP256(sk) => VerifyingKey::EcdsaP256(*sk.verifying_key()),
            SigningKey::Mock(k) => VerifyingKey::Mock(*k),
        }
    }

    pub fn sign(&self, payload: &[u8]) -> Signature {
        match self {
            SigningKey::EcdsaP256(sk) => {
                let sig: ecdsa::Signature = sk.sign(payload);
                Signature {
                    scheme: SchemeId::EcdsaP256,
                    bytes: sig.to_bytes().to_vec(),
                }
            }
            SigningKey::Mock(k) => {
                let mut mac =
                    Hmac::<Sha256>::new_from_slice(k).expect("hmac accepts any key length");
                mac.update(payload);
                let full: [u8; 32] = mac.finalize().into_bytes().into();
                Signature {
                    scheme: SchemeId::Mock,
                    bytes: full[..MOCK_SIG_LEN].to_vec(),
                }
            }
        }
    }
}

impl VerifyingKey {
    /// Verify a signature. Malformed signature bytes or a scheme mismatch
    /// yield `false`, never a panic.
    pub fn verify(&self, payload: &[u8], sig: &Signature) -> bool {
        match (self, sig.scheme) {
            (VerifyingKey::EcdsaP256(vk), SchemeId::EcdsaP256) => {
                let Ok(parsed) = ecdsa::Signature::from_slice(&sig.bytes) else {
                    return false;
                };
                vk.verify(payload, &parsed).is_ok()
            }
            (VerifyingKey::Mock(k), SchemeId::Mock) => {
                let mut mac =
                    Hmac::<Sha256>::new_from_slice(k).expect("hmac accepts any key length");
                mac.update(payload);
                let full: [u8; 32] = mac.finalize().into_bytes().into();
                if sig.bytes.len() != MOCK_SIG_LEN {
                    return false;
                }
                full[..MOCK_SIG_LEN].ct_eq(&sig.bytes).into()
            }
            _ => false,
        }
    }

    /// Verify against an already-computed SHA-256 digest of the payload.
    /// Only meaningful for ECDSA; the mock scheme falls back to treating the
    /// digest bytes as the message.
    pub fn verify_prehash(&self, digest: &Digest, sig: &Signature) -> bool {
        match (self, sig.scheme) {
            (VerifyingKey::EcdsaP256(vk), SchemeId::EcdsaP256) => {
                let Ok(parsed) = ecdsa::Signature::from_slice(&sig.bytes) else {
                    return false;
                };
                vk.verify_prehash(&digest.0, &parsed).is_ok()
            }
            _ => self.verify(&digest.0, sig),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            VerifyingKey::EcdsaP256(vk) => {
                let mut out = vec![SchemeId::EcdsaP256.wire_id()];
                out.extend_from_slice(vk.to_encoded_point(true).as_bytes());
                out
            }
            VerifyingKey::Mock(k) => {
                let mut out = vec![SchemeId::Mock.wire_id()];
                out.extend_from_slice(k);
                out
            }
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        let (&id, rest) = bytes.split_first()?;
        match SchemeId::from_wire_id(id)? {
            SchemeId::EcdsaP256 => {
                let vk = ecdsa::VerifyingKey::from_sec1_bytes(rest).ok()?;
                Some(VerifyingKey::EcdsaP256(vk))
            }
            SchemeId::Mock => {
                let k: [u8; 32] = rest.try_into().ok()?;
                Some(VerifyingKey::Mock(k))
            }
        }
    }
}

/// Per-`Γ_CRL` one-way key chain. `chain[0]` is the signed anchor and
/// `chain[i]` is the interval-`i` commitment key, `i` in `1..=n_intervals`.
#[derive(Clone, Debug)]
pub struct KeySchedule {
    pub gamma_crl_index: u32,
    chain: Vec<Digest>,
    pub anchor_signature: Signature,
}

impl KeySchedule {
    /// Build a schedule of `n_intervals` keys from a random seed and sign the
    /// anchor under the issuer key.
    pub fn generate<R: RngCore + CryptoRng>(
        gamma_crl_index: u32,
        n_intervals: u32,
        rng: &mut R,
        issuer_key: &SigningKey,
    ) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(gamma_crl_index, n_intervals, Digest(seed), issuer_key)
    }

    pub fn from_seed(
        gamma_crl_index: u32,
        n_intervals: u32,
        seed: Digest,
        issuer_key: &SigningKey,
    ) -> Self {
        // hash_chain walks forward from the seed; the anchor is the deepest
        // hash, so the schedule stores the chain reversed.
        let mut chain = hash_chain(seed, n_intervals);
        chain.reverse();
        let anchor_signature =
            issuer_key.sign(&Self::anchor_payload(gamma_crl_index, &chain[0]));
        KeySchedule {
            gamma_crl_index,
            chain,
            anchor_signature,
        }
    }

    pub fn anchor_payload(gamma_crl_index: u32, anchor: &Digest) -> [u8; 36] {
        let mut payload = [0u8; 36];
        payload[..4].copy_from_slice(&gamma_crl_index.to_be_bytes());
        payload[4..].copy_from_slice(&anchor.0);
        payload
    }

    pub fn verify_anchor(
        gamma_crl_index: u32,
        anchor: &Digest,
        sig: &Signature,
        issuer_pub: &VerifyingKey,
    ) -> bool {
        issuer_pub.verify(&Self::anchor_payload(gamma_crl_index, anchor), sig)
    }

    pub fn anchor(&self) -> &Digest {
        &self.chain[0]
    }

    pub fn n_intervals(&self) -> u32 {
        (self.chain.len() - 1) as u32
    }

    /// Commitment key for interval `i` (1-based). None outside `1..=N`.
    pub fn key(&self, interval: u32) -> Option<&Digest> {
        if interval == 0 {
            return None;
        }
        self.chain.get(interval as usize)
    }
}
