//! Time-aligned pseudonym batches whose serial numbers form a one-way chain.
//!
//! A batch's serials are linked as `SN_w = H(SN_{w-1} || C_w)` with
//! `C_w = H^w(Rnd_0)`, so revoking from index `z` onward discloses only
//! `(SN_z, C_z, D - z)`: anyone can derive the revoked suffix, while serials
//! before `z` stay unlinkable (forward privacy).

use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};

use crate::bloom::Fingerprint;
use crate::crypto::{chain_hash_pair, chain_step, Digest, Signature, SigningKey, VerifyingKey};
use crate::error::Error;
use crate::params::ProtocolParams;
use crate::wire;

/// One short-lived credential. The issuer signature covers the serial,
/// validity window, holder key, and (for carrier pseudonyms) the embedded
/// fingerprint, so validating the pseudonym also authenticates the carried
/// fingerprint bytes.
#[derive(Clone, Debug)]
pub struct Pseudonym {
    pub serial: Digest,
    /// Validity window in microseconds, aligned to the τ_P grid.
    pub valid_from: u64,
    pub valid_to: u64,
    /// 1-based position in the issuing batch.
    pub index_in_batch: u16,
    pub public_key: VerifyingKey,
    pub carrier_payload: Option<Fingerprint>,
    pub issuer_signature: Signature,
}

impl Pseudonym {
    pub fn is_valid_at(&self, t: u64) -> bool {
        self.valid_from <= t && t < self.valid_to
    }

    pub fn signed_payload(&self) -> Vec<u8> {
        wire::pseudonym_signed_payload(self)
    }

    pub fn verify(&self, issuer_pub: &VerifyingKey) -> bool {
        issuer_pub.verify(&self.signed_payload(), &self.issuer_signature)
    }
}

/// Issuer-side record of one Γ-interval credential set. `sn_anchor` and
/// `rnd_seed` are issuer secrets; holders only ever see the pseudonyms.
#[derive(Clone, Debug)]
pub struct PseudonymBatch {
    pub gamma_index: u32,
    sn_anchor: Digest,
    rnd_seed: Digest,
    pub pseudonyms: Vec<Pseudonym>,
    /// Opaque link to the anonymized ticket the batch was issued against.
    pub ticket_id: u64,
}

pub struct IssueParams<'a> {
    pub gamma_index: u32,
    pub tau_p: u64,
    pub gamma_len: u64,
    pub is_carrier: bool,
    pub fingerprint: Option<&'a Fingerprint>,
    pub holder_public_key: VerifyingKey,
    pub ticket_id: u64,
}

/// Issue a batch of `D = Γ/τ_P` chained pseudonyms covering the Γ interval
/// with consecutive, non-overlapping lifetimes.
pub fn issue_batch<R: RngCore + CryptoRng>(
    p: IssueParams<'_>,
    rng: &mut R,
    issuer_key: &SigningKey,
) -> Result<PseudonymBatch, Error> {
    if p.tau_p == 0 || p.gamma_len == 0 || p.gamma_len % p.tau_p != 0 {
        return Err(Error::Param("gamma_len must be a positive multiple of tau_p"));
    }
    if p.is_carrier && p.fingerprint.is_none() {
        return Err(Error::Param("carrier batch needs a fingerprint"));
    }
    let d = p.gamma_len / p.tau_p;
    if d > u16::MAX as u64 {
        return Err(Error::Param("batch size exceeds u16"));
    }

    let mut sn_anchor = [0u8; 32];
    let mut rnd_seed = [0u8; 32];
    rng.fill_bytes(&mut sn_anchor);
    rng.fill_bytes(&mut rnd_seed);
    let sn_anchor = Digest(sn_anchor);
    let rnd_seed = Digest(rnd_seed);

    let gamma_start = p.gamma_index as u64 * p.gamma_len;
    let mut pseudonyms = Vec::with_capacity(d as usize);
    let mut serial = sn_anchor;
    let mut chain_value = rnd_seed;
    for w in 1..=d {
        chain_value = chain_step(&chain_value); // C_w = H^w(Rnd_0)
        serial = chain_hash_pair(&serial, &chain_value); // SN_w = H(SN_{w-1} || C_w)
        let valid_from = gamma_start + (w - 1) * p.tau_p;
        let mut psn = Pseudonym {
            serial,
            valid_from,
            valid_to: valid_from + p.tau_p,
            index_in_batch: w as u16,
            public_key: p.holder_public_key.clone(),
            carrier_payload: if p.is_carrier { p.fingerprint.cloned() } else { None },
            issuer_signature: Signature { scheme: issuer_key.scheme(), bytes: Vec::new() },
        };
        psn.issuer_signature = issuer_key.sign(&psn.signed_payload());
        pseudonyms.push(psn);
    }

    Ok(PseudonymBatch {
        gamma_index: p.gamma_index,
        sn_anchor,
        rnd_seed,
        pseudonyms,
        ticket_id: p.ticket_id,
    })
}

impl PseudonymBatch {
    pub fn len(&self) -> u16 {
        self.pseudonyms.len() as u16
    }

    /// Issuer secret SN_0. Exposed for golden-vector export; never ships to
    /// holders.
    pub fn sn_anchor(&self) -> &Digest {
        &self.sn_anchor
    }

    /// Issuer secret Rnd_0. Exposed for golden-vector export.
    pub fn rnd_seed(&self) -> &Digest {
        &self.rnd_seed
    }

    pub fn is_empty(&self) -> bool {
        self.pseudonyms.is_empty()
    }

    /// `C_w = H^w(Rnd_0)`, `w` 1-based.
    pub fn chain_value(&self, w: u16) -> Digest {
        let mut c = self.rnd_seed;
        for _ in 0..w {
            c = chain_step(&c);
        }
        c
    }

    /// Absolute τ_P interval of the batch's first pseudonym.
    pub fn first_interval(&self, params: &ProtocolParams) -> u32 {
        params.interval_of(self.pseudonyms[0].valid_from)
    }

    pub fn serial(&self, index: u16) -> Option<&Digest> {
        self.pseudonyms.get(index as usize - 1).map(|p| &p.serial)
    }
}

/// One base-CRL entry: the first revoked serial, the matching chain value,
/// and how many later pseudonyms the batch still holds. Expands to exactly
/// `remaining + 1` serials.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RevocationEntry {
    pub first_revoked_serial: Digest,
    pub chain_value: Digest,
    pub remaining: u16,
    /// Absolute τ_P interval in which `first_revoked_serial` is valid.
    pub first_interval: u32,
}

/// Entry revoking batch indices `from_index..=D` (1-based).
pub fn make_revocation_entry(
    batch: &PseudonymBatch,
    from_index: u16,
    params: &ProtocolParams,
) -> Result<RevocationEntry, Error> {
    let d = batch.len();
    if from_index == 0 || from_index > d {
        return Err(Error::Param("from_index out of batch range"));
    }
    let psn = &batch.pseudonyms[from_index as usize - 1];
    Ok(RevocationEntry {
        first_revoked_serial: psn.serial,
        chain_value: batch.chain_value(from_index),
        remaining: d - from_index,
        first_interval: params.interval_of(psn.valid_from),
    })
}

/// Derive the full revoked suffix from an entry: `SN_z` itself followed by
/// `remaining` chained serials. Runs the chain in the running form
/// `C <- H(C); SN <- H(SN || C)`, equivalent to re-hashing the disclosed
/// value `w` times per step but linear instead of quadratic.
pub fn expand_entry(entry: &RevocationEntry) -> Vec<Digest> {
    let mut out = Vec::with_capacity(entry.remaining as usize + 1);
    let mut serial = entry.first_revoked_serial;
    let mut chain_value = entry.chain_value;
    out.push(serial);
    for _ in 0..entry.remaining {
        chain_value = chain_step(&chain_value);
        serial = chain_hash_pair(&serial, &chain_value);
        out.push(serial);
    }
    out
}

/// Expansion tagged with validity intervals: the first serial at
/// `first_interval`, successors at successive intervals.
pub fn expand_entry_with_intervals(entry: &RevocationEntry) -> Vec<(Digest, u32)> {
    expand_entry(entry)
        .into_iter()
        .enumerate()
        .map(|(off, sn)| (sn, entry.first_interval + off as u32))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{chain_step_n, SchemeId};
    use crate::params::secs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn setup(tau_s: u64, gamma_s: u64) -> (ProtocolParams, SigningKey, ChaCha12Rng) {
        let params = ProtocolParams::new(secs(tau_s), secs(gamma_s), secs(gamma_s)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let key = SigningKey::generate(SchemeId::Mock, &mut rng);
        (params, key, rng)
    }

    fn issue(
        params: &ProtocolParams,
        key: &SigningKey,
        rng: &mut ChaCha12Rng,
        gamma_index: u32,
    ) -> PseudonymBatch {
        issue_batch(
            IssueParams {
                gamma_index,
                tau_p: params.tau_p,
                gamma_len: params.gamma,
                is_carrier: false,
                fingerprint: None,
                holder_public_key: key.verifying_key(),
                ticket_id: 7,
            },
            rng,
            key,
        )
        .unwrap()
    }

    #[test]
    fn single_pseudonym_batch() {
        let (params, key, mut rng) = setup(60, 60);
        let b = issue(&params, &key, &mut rng, 3);
        assert_eq!(b.len(), 1);
        assert_eq!(b.pseudonyms[0].valid_from, secs(180));
        assert_eq!(b.pseudonyms[0].valid_to, secs(240));
    }

    #[test]
    fn hour_batch_chain_rederives_from_anchor() {
        let (params, key, mut rng) = setup(60, 3600);
        let b = issue(&params, &key, &mut rng, 0);
        assert_eq!(b.len(), 60);
        // Re-derive every serial from the issuer secrets.
        let mut serial = b.sn_anchor;
        for w in 1..=60u16 {
            serial = chain_hash_pair(&serial, &b.chain_value(w));
            assert_eq!(b.pseudonyms[w as usize - 1].serial, serial);
            assert_eq!(b.pseudonyms[w as usize - 1].index_in_batch, w);
        }
        // Lifetimes tile the Γ interval without gaps or overlap.
        for w in 1..60 {
            assert_eq!(b.pseudonyms[w].valid_from, b.pseudonyms[w - 1].valid_to);
            assert_eq!(
                b.pseudonyms[w].valid_to - b.pseudonyms[w].valid_from,
                params.tau_p
            );
        }
    }

    #[test]
    fn rejects_non_divisible_gamma() {
        let (_, key, mut rng) = setup(60, 60);
        let err = issue_batch(
            IssueParams {
                gamma_index: 0,
                tau_p: secs(60),
                gamma_len: secs(90),
                is_carrier: false,
                fingerprint: None,
                holder_public_key: key.verifying_key(),
                ticket_id: 0,
            },
            &mut rng,
            &key,
        );
        assert!(err.is_err());
    }

    #[test]
    fn carrier_batch_requires_and_binds_fingerprint() {
        let (params, key, mut rng) = setup(60, 300);
        let missing = issue_batch(
            IssueParams {
                gamma_index: 0,
                tau_p: params.tau_p,
                gamma_len: params.gamma,
                is_carrier: true,
                fingerprint: None,
                holder_public_key: key.verifying_key(),
                ticket_id: 0,
            },
            &mut rng,
            &key,
        );
        assert!(missing.is_err());

        let fp = Fingerprint::build(0, 1, &[crate::crypto::sha256(b"p0")], 1e-20, &key).unwrap();
        let b = issue_batch(
            IssueParams {
                gamma_index: 0,
                tau_p: params.tau_p,
                gamma_len: params.gamma,
                is_carrier: true,
                fingerprint: Some(&fp),
                holder_public_key: key.verifying_key(),
                ticket_id: 0,
            },
            &mut rng,
            &key,
        )
        .unwrap();
        let pubkey = key.verifying_key();
        for psn in &b.pseudonyms {
            assert!(psn.verify(&pubkey));
            assert!(psn.carrier_payload.is_some());
            // Tampering with the embedded fingerprint breaks the pseudonym
            // signature: the carrier payload is inside the signed bytes.
            let mut evil = psn.clone();
            evil.carrier_payload.as_mut().unwrap().crl_version += 1;
            assert!(!evil.verify(&pubkey));
        }
    }

    #[test]
    fn entry_boundaries() {
        let (params, key, mut rng) = setup(60, 360);
        let b = issue(&params, &key, &mut rng, 0);
        let d = b.len();

        let last = make_revocation_entry(&b, d, &params).unwrap();
        assert_eq!(last.remaining, 0);
        assert_eq!(expand_entry(&last), alloc::vec![*b.serial(d).unwrap()]);

        let full = make_revocation_entry(&b, 1, &params).unwrap();
        let serials: Vec<Digest> = b.pseudonyms.iter().map(|p| p.serial).collect();
        assert_eq!(expand_entry(&full), serials);

        assert!(make_revocation_entry(&b, 0, &params).is_err());
        assert!(make_revocation_entry(&b, d + 1, &params).is_err());
    }

    #[test]
    fn mid_batch_entry_expands_to_suffix() {
        // D = 6, revoke from index 4: expansion is serials 4, 5, 6.
        let (params, key, mut rng) = setup(60, 360);
        let b = issue(&params, &key, &mut rng, 0);
        let entry = make_revocation_entry(&b, 4, &params).unwrap();
        assert_eq!(entry.remaining, 2);
        let expanded = expand_entry(&entry);
        let expected: Vec<Digest> =
            b.pseudonyms[3..].iter().map(|p| p.serial).collect();
        assert_eq!(expanded, expected);
    }

    #[test]
    fn expansion_matches_issuer_suffix_for_all_indices() {
        let (params, key, mut rng) = setup(60, 600);
        for _ in 0..100 {
            let b = issue(&params, &key, &mut rng, 1);
            let serials: Vec<Digest> = b.pseudonyms.iter().map(|p| p.serial).collect();
            for i in 1..=b.len() {
                let entry = make_revocation_entry(&b, i, &params).unwrap();
                assert_eq!(expand_entry(&entry), serials[i as usize - 1..]);
            }
        }
    }

    // The running form C <- H(C) equals the literal w-fold re-hash of the
    // disclosed chain value.
    #[test]
    fn running_form_equals_literal_form() {
        let (params, key, mut rng) = setup(60, 600);
        let b = issue(&params, &key, &mut rng, 0);
        let entry = make_revocation_entry(&b, 3, &params).unwrap();

        let mut literal = alloc::vec![entry.first_revoked_serial];
        let mut sn = entry.first_revoked_serial;
        for w in 1..=entry.remaining as u32 {
            let cw = chain_step_n(&entry.chain_value, w);
            sn = chain_hash_pair(&sn, &cw);
            literal.push(sn);
        }
        assert_eq!(expand_entry(&entry), literal);
    }

    #[test]
    fn expansion_never_reaches_before_from_index() {
        let (params, key, mut rng) = setup(60, 600);
        for _ in 0..200 {
            let b = issue(&params, &key, &mut rng, 2);
            for i in 2..=b.len() {
                let entry = make_revocation_entry(&b, i, &params).unwrap();
                let expanded = expand_entry(&entry);
                assert_eq!(expanded.len(), entry.remaining as usize + 1);
                for pre in &b.pseudonyms[..i as usize - 1] {
                    assert!(!expanded.contains(&pre.serial));
                }
            }
        }
    }

    #[test]
    fn interval_tagging_is_consecutive() {
        let (params, key, mut rng) = setup(60, 360);
        let b = issue(&params, &key, &mut rng, 5);
        let entry = make_revocation_entry(&b, 2, &params).unwrap();
        let tagged = expand_entry_with_intervals(&entry);
        let base = params.interval_of(b.pseudonyms[1].valid_from);
        for (off, (sn, iv)) in tagged.iter().enumerate() {
            assert_eq!(*iv, base + off as u32);
            assert_eq!(*sn, b.pseudonyms[1 + off].serial);
        }
    }

    #[test]
    fn time_alignment_across_batches() {
        let (params, key, mut rng) = setup(60, 600);
        let a = issue(&params, &key, &mut rng, 4);
        let b = issue(&params, &key, &mut rng, 4);
        let windows =
            |batch: &PseudonymBatch| -> Vec<(u64, u64)> {
                batch.pseudonyms.iter().map(|p| (p.valid_from, p.valid_to)).collect()
            };
        assert_eq!(windows(&a), windows(&b));
    }
}
