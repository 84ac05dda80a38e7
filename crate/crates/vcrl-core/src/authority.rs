//! Issuer (PCA) side: the revocation ledger, per-Γ_CRL base-CRL assembly and
//! piece splitting under a bandwidth budget, fingerprint construction,
//! delta-CRL construction keyed by the interval chain, and scheduled key
//! disclosure.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};

use crate::bloom::Fingerprint;
use crate::credentials::{
    issue_batch, make_revocation_entry, IssueParams, PseudonymBatch, RevocationEntry,
};
use crate::crypto::{
    derive_interval_keys, mac_compute, Digest, KeySchedule, Signature, SigningKey, VerifyingKey,
};
use crate::error::Error;
use crate::params::{DisclosureMode, ProtocolParams};
use crate::wire;

pub type BatchId = u64;

/// Bandwidth-sized unit of one Γ_CRL's base revocation data. All pieces of a
/// Γ_CRL carry the same signed key-chain anchor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrlPiece {
    pub gamma_crl_index: u32,
    pub crl_version: u32,
    pub piece_index: u16,
    pub total_pieces: u16,
    pub entries: Vec<RevocationEntry>,
    pub tesla_anchor: Digest,
    pub anchor_signature: Signature,
}

/// Incremental update for one τ_P interval: bare serials (no chain values,
/// keeping revocation reversible), MAC'd under the interval key, carrying the
/// previous interval's now-disclosable key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaCrlPiece {
    pub gamma_crl_index: u32,
    /// Local 1-based interval the serials are valid in.
    pub interval_index: u32,
    pub piece_index: u16,
    pub total_pieces: u16,
    pub serials: Vec<Digest>,
    pub disclosed_prev_key: Digest,
    pub mac: Digest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchStatus {
    Active,
    Revoked {
        from_interval: u32,
        recorded_at: u64,
    },
    Reinstated {
        from_interval: u32,
        revoked_recorded_at: u64,
        at_interval: u32,
        recorded_at: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LedgerEventKind {
    Revoke,
    Reinstate,
}

#[derive(Clone, Copy, Debug)]
pub struct LedgerEvent {
    pub time: u64,
    pub batch_id: BatchId,
    pub kind: LedgerEventKind,
    pub interval: u32,
}

struct LedgerBatch {
    batch: PseudonymBatch,
    status: BatchStatus,
}

/// Output of one base-CRL build.
pub struct BaseCrl {
    pub pieces: Vec<CrlPiece>,
    pub fingerprint: Fingerprint,
}

struct GammaCrlState {
    version: u32,
    schedule: KeySchedule,
    /// Batches covered by the current base CRL, with the first covered
    /// absolute interval; delta pieces exclude these.
    base_cover: BTreeMap<BatchId, u32>,
}

pub struct RevocationAuthority {
    params: ProtocolParams,
    key: SigningKey,
    /// Target false-positive rate for piece fingerprints.
    pub fingerprint_target_p: f64,
    batches: BTreeMap<BatchId, LedgerBatch>,
    events: Vec<LedgerEvent>,
    next_id: BatchId,
    gamma_state: BTreeMap<u32, GammaCrlState>,
}

impl RevocationAuthority {
    pub fn new(params: ProtocolParams, key: SigningKey, fingerprint_target_p: f64) -> Self {
        RevocationAuthority {
            params,
            key,
            fingerprint_target_p,
            batches: BTreeMap::new(),
            events: Vec::new(),
            next_id: 0,
            gamma_state: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn public_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    pub fn issue<R: RngCore + CryptoRng>(
        &mut self,
        gamma_index: u32,
        is_carrier: bool,
        fingerprint: Option<&Fingerprint>,
        holder_public_key: VerifyingKey,
        rng: &mut R,
    ) -> Result<BatchId, Error> {
        let id = self.next_id;
        let batch = issue_batch(
            IssueParams {
                gamma_index,
                tau_p: self.params.tau_p,
                gamma_len: self.params.gamma,
                is_carrier,
                fingerprint,
                holder_public_key,
                ticket_id: id,
            },
            rng,
            &self.key,
        )?;
        self.batches.insert(id, LedgerBatch { batch, status: BatchStatus::Active });
        self.next_id += 1;
        Ok(id)
    }

    pub fn batch(&self, id: BatchId) -> Option<&PseudonymBatch> {
        self.batches.get(&id).map(|b| &b.batch)
    }

    pub fn status(&self, id: BatchId) -> Option<BatchStatus> {
        self.batches.get(&id).map(|b| b.status)
    }

    pub fn batches(&self) -> impl Iterator<Item = (BatchId, &PseudonymBatch, BatchStatus)> {
        self.batches.iter().map(|(id, lb)| (*id, &lb.batch, lb.status))
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    /// Mark a batch revoked from `from_interval` (absolute) onward.
    pub fn revoke(&mut self, id: BatchId, from_interval: u32, now: u64) -> Result<(), Error> {
        let lb = self.batches.get_mut(&id).ok_or(Error::State("unknown batch"))?;
        match lb.status {
            BatchStatus::Active | BatchStatus::Reinstated { .. } => {
                lb.status = BatchStatus::Revoked { from_interval, recorded_at: now };
                self.events.push(LedgerEvent {
                    time: now,
                    batch_id: id,
                    kind: LedgerEventKind::Revoke,
                    interval: from_interval,
                });
                Ok(())
            }
            BatchStatus::Revoked { .. } => Err(Error::State("batch already revoked")),
        }
    }

    /// Reinstate a revoked batch from `at_interval` onward. Serials already
    /// published stay published; nothing after `at_interval` is.
    pub fn reinstate(&mut self, id: BatchId, at_interval: u32, now: u64) -> Result<(), Error> {
        let lb = self.batches.get_mut(&id).ok_or(Error::State("unknown batch"))?;
        match lb.status {
            BatchStatus::Revoked { from_interval, recorded_at } => {
                if at_interval <= from_interval {
                    return Err(Error::Param("reinstatement must postdate the revocation"));
                }
                lb.status = BatchStatus::Reinstated {
                    from_interval,
                    revoked_recorded_at: recorded_at,
                    at_interval,
                    recorded_at: now,
                };
                self.events.push(LedgerEvent {
                    time: now,
                    batch_id: id,
                    kind: LedgerEventKind::Reinstate,
                    interval: at_interval,
                });
                Ok(())
            }
            _ => Err(Error::State("only a revoked batch can be reinstated")),
        }
    }

    fn ensure_gamma_state<R: RngCore + CryptoRng>(
        &mut self,
        gamma_crl_index: u32,
        rng: &mut R,
    ) -> &mut GammaCrlState {
        let params = self.params;
        let key = &self.key;
        self.gamma_state.entry(gamma_crl_index).or_insert_with(|| GammaCrlState {
            version: 0,
            schedule: KeySchedule::generate(
                gamma_crl_index,
                params.intervals_per_gamma_crl(),
                rng,
                key,
            ),
            base_cover: BTreeMap::new(),
        })
    }

    pub fn schedule(&self, gamma_crl_index: u32) -> Option<&KeySchedule> {
        self.gamma_state.get(&gamma_crl_index).map(|s| &s.schedule)
    }

    pub fn crl_version(&self, gamma_crl_index: u32) -> u32 {
        self.gamma_state.get(&gamma_crl_index).map_or(0, |s| s.version)
    }

    /// Build (or rebuild, bumping the version) the base CRL for a Γ_CRL.
    ///
    /// Entries cover batches currently revoked and never reinstated whose
    /// unexpired pseudonyms overlap the Γ_CRL; indices already expired at
    /// `now` are advanced past, so the disclosed chain prefix is minimal.
    /// The piece count follows `ceil(total_entry_bytes / B)` and is raised
    /// only if per-piece headers would push an encoded piece over `B`.
    pub fn build_base_crl<R: RngCore + CryptoRng>(
        &mut self,
        gamma_crl_index: u32,
        bandwidth_bytes: u32,
        now: u64,
        rng: &mut R,
    ) -> Result<BaseCrl, Error> {
        let min_piece = wire::crl_piece_wire_len(1, self.key.scheme()) as u32;
        if bandwidth_bytes < min_piece {
            return Err(Error::Param("bandwidth below a single-entry piece"));
        }
        let params = self.params;
        let gc_first = params.interval_of(params.gamma_crl_start(gamma_crl_index));
        let gc_end = gc_first + params.intervals_per_gamma_crl();
        let now_interval = params.interval_of(now);

        let mut entries: Vec<(RevocationEntry, BatchId)> = Vec::new();
        for (id, lb) in &self.batches {
            let BatchStatus::Revoked { from_interval, recorded_at } = lb.status else {
                continue;
            };
            if recorded_at > now {
                continue;
            }
            let batch = &lb.batch;
            let first = batch.first_interval(&params);
            let end = first + batch.len() as u32;
            if first >= gc_end || end <= gc_first {
                continue; // no lifetime inside this Γ_CRL
            }
            let eff = from_interval.max(first).max(gc_first).max(now_interval);
            if eff >= end || eff >= gc_end {
                continue; // everything left is expired or out of scope
            }
            let local_index = (eff - first + 1) as u16;
            entries.push((make_revocation_entry(batch, local_index, &params)?, *id));
        }
        entries.sort_by(|a, b| {
            (a.0.first_interval, a.0.first_revoked_serial)
                .cmp(&(b.0.first_interval, b.0.first_revoked_serial))
        });

        let state = self.ensure_gamma_state(gamma_crl_index, rng);
        state.version += 1;
        state.base_cover =
            entries.iter().map(|(e, id)| (*id, e.first_interval)).collect();
        let version = state.version;
        let anchor = *state.schedule.anchor();
        let anchor_signature = state.schedule.anchor_signature.clone();

        let pieces = if entries.is_empty() {
            Vec::new()
        } else {
            let count = entries.len();
            let total_bytes = count * wire::ENTRY_WIRE_LEN;
            let mut n = total_bytes.div_ceil(bandwidth_bytes as usize).max(1);
            while wire::crl_piece_wire_len(count.div_ceil(n), self.key.scheme())
                > bandwidth_bytes as usize
            {
                n += 1;
            }
            let base = count / n;
            let rem = count % n;
            let mut pieces = Vec::with_capacity(n);
            let mut it = entries.iter().map(|(e, _)| *e);
            for piece_index in 0..n {
                let take = base + usize::from(piece_index < rem);
                pieces.push(CrlPiece {
                    gamma_crl_index,
                    crl_version: version,
                    piece_index: piece_index as u16,
                    total_pieces: n as u16,
                    entries: it.by_ref().take(take).collect(),
                    tesla_anchor: anchor,
                    anchor_signature: anchor_signature.clone(),
                });
            }
            pieces
        };

        let digests: Vec<Digest> = pieces
            .iter()
            .map(|p| wire::piece_digest(&wire::encode_crl_piece(p)))
            .collect();
        let fingerprint = Fingerprint::build(
            gamma_crl_index,
            version,
            &digests,
            self.fingerprint_target_p,
            &self.key,
        )?;
        Ok(BaseCrl { pieces, fingerprint })
    }

    /// Serials the delta pieces for local interval `i` must carry at time
    /// `now`: revoked at that interval per events recorded by `now`, not
    /// reinstated by then, and not already covered by this Γ_CRL's base CRL.
    fn delta_serials(&self, gamma_crl_index: u32, local_interval: u32, now: u64) -> Vec<Digest> {
        let iv = self.params.absolute_interval(gamma_crl_index, local_interval);
        let cover = self.gamma_state.get(&gamma_crl_index).map(|s| &s.base_cover);
        let mut serials = Vec::new();
        for (id, lb) in &self.batches {
            let revoked_here = match lb.status {
                BatchStatus::Active => false,
                BatchStatus::Revoked { from_interval, recorded_at } => {
                    recorded_at <= now && from_interval <= iv
                }
                BatchStatus::Reinstated {
                    from_interval,
                    revoked_recorded_at,
                    at_interval,
                    recorded_at,
                } => {
                    revoked_recorded_at <= now
                        && from_interval <= iv
                        && !(recorded_at <= now && at_interval <= iv)
                }
            };
            if !revoked_here {
                continue;
            }
            if let Some(cover) = cover {
                if cover.get(id).is_some_and(|covered_from| *covered_from <= iv) {
                    continue;
                }
            }
            let batch = &lb.batch;
            let first = batch.first_interval(&self.params);
            if iv < first || iv >= first + batch.len() as u32 {
                continue;
            }
            serials.push(batch.pseudonyms[(iv - first) as usize].serial);
        }
        serials.sort_unstable();
        serials
    }

    /// Build the delta pieces for local interval `i` of a Γ_CRL.
    ///
    /// `key_k_i` must equal the schedule's interval-`i` commitment key; the
    /// mismatch is an internal consistency error, not a recoverable input.
    /// An interval with no pending serials yields no pieces (keys are still
    /// disclosed on schedule so receivers can tell "nothing revoked" from
    /// "pieces suppressed").
    pub fn gen_delta_crl(
        &mut self,
        gamma_crl_index: u32,
        local_interval: u32,
        key_k_i: &Digest,
        bandwidth_bytes: u32,
        now: u64,
    ) -> Result<Vec<DeltaCrlPiece>, Error> {
        if bandwidth_bytes < wire::delta_piece_wire_len(1) as u32 {
            return Err(Error::Param("bandwidth below a single-serial delta piece"));
        }
        let state = self
            .gamma_state
            .get(&gamma_crl_index)
            .ok_or(Error::State("no key schedule; build the base CRL first"))?;
        let n_intervals = state.schedule.n_intervals();
        if local_interval == 0 || local_interval > n_intervals {
            return Err(Error::Param("interval outside this gamma_crl"));
        }
        if state.schedule.key(local_interval) != Some(key_k_i) {
            return Err(Error::State("supplied key does not match the schedule"));
        }

        let serials = self.delta_serials(gamma_crl_index, local_interval, now);
        if serials.is_empty() {
            return Ok(Vec::new());
        }

        let (k_prev, mac_key) = derive_interval_keys(key_k_i, local_interval);
        let count = serials.len();
        let mut n = (count * 32).div_ceil(bandwidth_bytes as usize).max(1);
        while wire::delta_piece_wire_len(count.div_ceil(n)) > bandwidth_bytes as usize {
            n += 1;
        }
        let base = count / n;
        let rem = count % n;
        let mut pieces = Vec::with_capacity(n);
        let mut it = serials.into_iter();
        for piece_index in 0..n {
            let take = base + usize::from(piece_index < rem);
            let mut piece = DeltaCrlPiece {
                gamma_crl_index,
                interval_index: local_interval,
                piece_index: piece_index as u16,
                total_pieces: n as u16,
                serials: it.by_ref().take(take).collect(),
                disclosed_prev_key: k_prev,
                mac: Digest([0; 32]),
            };
            piece.mac = mac_compute(&mac_key, &wire::delta_mac_payload(&piece));
            pieces.push(piece);
        }
        Ok(pieces)
    }

    /// Release the interval-`i` commitment key if the disclosure schedule
    /// allows it at `now`. Idempotent; never yields keys ahead of schedule.
    pub fn disclose_key(
        &self,
        gamma_crl_index: u32,
        local_interval: u32,
        now: u64,
        mode: DisclosureMode,
    ) -> Result<Digest, Error> {
        let state = self
            .gamma_state
            .get(&gamma_crl_index)
            .ok_or(Error::State("no key schedule; build the base CRL first"))?;
        let key = state
            .schedule
            .key(local_interval)
            .ok_or(Error::Param("interval outside this gamma_crl"))?;
        let allowed_from = self.params.disclosure_time(gamma_crl_index, local_interval, mode);
        if now < allowed_from {
            return Err(Error::EarlyDisclosure { interval: local_interval });
        }
        Ok(*key)
    }
}
