//! OBU-side state machine: fingerprint tracking, base-piece validation by
//! Bloom membership, CRL parsing into the per-interval revocation store,
//! delta buffering with MAC validation on key disclosure, and per-sender
//! rate limiting.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::authority::{CrlPiece, DeltaCrlPiece};
use crate::bloom::Fingerprint;
use crate::credentials::{expand_entry_with_intervals, Pseudonym};
use crate::crypto::{
    derive_interval_keys, mac_verify, verify_key_against_anchor, Digest, KeySchedule, Signature,
    SigningKey, VerifyingKey,
};
use crate::error::Error;
use crate::params::{DisclosureMode, ProtocolParams};
use crate::ratelimit::SenderLimiter;
use crate::wire;

/// Signed query for missing base pieces of the current Γ_CRL.
#[derive(Clone, Debug)]
pub struct PieceRequest {
    pub gamma_crl_index: u32,
    pub crl_version: u32,
    pub missing: Vec<u16>,
    pub requester: Pseudonym,
    pub signature: Signature,
}

impl PieceRequest {
    pub fn build(
        gamma_crl_index: u32,
        crl_version: u32,
        missing: Vec<u16>,
        requester: Pseudonym,
        holder_key: &SigningKey,
    ) -> Self {
        let mut req = PieceRequest {
            gamma_crl_index,
            crl_version,
            missing,
            requester,
            signature: Signature { scheme: holder_key.scheme(), bytes: Vec::new() },
        };
        req.signature = holder_key.sign(&wire::piece_request_signed_payload(&req));
        req
    }
}

#[derive(Clone, Debug)]
pub struct VehicleConfig {
    pub params: ProtocolParams,
    pub issuer_pub: VerifyingKey,
    pub disclosure_mode: DisclosureMode,
    /// Local clock error: local time = true time + offset (µs).
    pub clock_offset: i64,
    /// Bound on |clock_offset| assumed by the TESLA safety check.
    pub max_drift: u64,
    /// Memory cap for buffered (unauthenticated) delta pieces.
    pub delta_buffer_cap_bytes: usize,
    /// Per-sender intake allowance for delta traffic.
    pub sender_rate_bytes_per_sec: f64,
    pub sender_burst_bytes: f64,
    /// How long a budget-breaching sender stays muted.
    pub mute_duration: u64,
    /// Largest entry expansion a piece may ask for before it is treated as
    /// malformed.
    pub max_entry_span: u16,
}

impl VehicleConfig {
    /// Defaults: strict disclosure, perfect clock, 1 MiB delta buffer, and a
    /// per-sender allowance of twice the legitimate piece rate.
    pub fn new(params: ProtocolParams, issuer_pub: VerifyingKey, bandwidth_bytes: u32) -> Self {
        VehicleConfig {
            params,
            issuer_pub,
            disclosure_mode: DisclosureMode::Strict,
            clock_offset: 0,
            max_drift: 0,
            delta_buffer_cap_bytes: 1 << 20,
            sender_rate_bytes_per_sec: 2.0 * bandwidth_bytes as f64,
            sender_burst_bytes: 2.0 * bandwidth_bytes as f64,
            mute_duration: params.tau_p,
            max_entry_span: 4096,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VehicleCounters {
    pub fingerprints_accepted: u64,
    pub fingerprints_stale: u64,
    pub fingerprints_bad_sig: u64,
    pub pieces_accepted: u64,
    pub pieces_duplicate: u64,
    pub pieces_rejected_bf: u64,
    pub pieces_rejected_malformed: u64,
    pub pieces_before_fingerprint: u64,
    pub delta_buffered: u64,
    pub delta_rejected_late: u64,
    pub delta_rejected_rate: u64,
    pub delta_rejected_cap: u64,
    pub delta_accepted: u64,
    pub delta_forged: u64,
    pub keys_rejected: u64,
    pub keys_accepted: u64,
    pub requests_answered: u64,
    pub misbehavior: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeltaOutcome {
    Buffered,
    /// Key for the interval already disclosed (or known): piece refused.
    RejectedLate,
    RejectedRateLimit,
    RejectedBufferCap,
    RejectedMalformed,
    /// Piece belongs to a different Γ_CRL than the local clock's.
    RejectedScope,
}

impl DeltaOutcome {
    pub fn buffered(self) -> bool {
        self == DeltaOutcome::Buffered
    }
}

/// Per-vehicle CRL acquisition state. One instance is owned by one agent and
/// driven from a single event loop.
pub struct VehicleCrlState {
    pub cfg: VehicleConfig,
    fingerprint: Option<Fingerprint>,
    pieces: BTreeMap<u16, CrlPiece>,
    anchor: Option<Digest>,
    delta_buffer: BTreeMap<u32, Vec<DeltaCrlPiece>>,
    delta_buffer_bytes: usize,
    /// Revoked serials keyed by absolute τ_P interval; each bucket sorted.
    store: BTreeMap<u32, Vec<Digest>>,
    known_keys: BTreeMap<u32, Digest>,
    cognizant: bool,
    limiters: BTreeMap<u64, SenderLimiter>,
    /// When enabled, (interval, serial) pairs accepted from validated delta
    /// pieces, for external audit; drained by the consumer.
    accept_log: Option<Vec<(u32, Digest)>>,
    pub counters: VehicleCounters,
}

impl VehicleCrlState {
    pub fn new(cfg: VehicleConfig) -> Self {
        VehicleCrlState {
            cfg,
            fingerprint: None,
            pieces: BTreeMap::new(),
            anchor: None,
            delta_buffer: BTreeMap::new(),
            delta_buffer_bytes: 0,
            store: BTreeMap::new(),
            known_keys: BTreeMap::new(),
            cognizant: false,
            limiters: BTreeMap::new(),
            accept_log: None,
            counters: VehicleCounters::default(),
        }
    }

    /// Start logging accepted delta serials for audit.
    pub fn enable_accept_log(&mut self) {
        self.accept_log = Some(Vec::new());
    }

    pub fn drain_accept_log(&mut self) -> Vec<(u32, Digest)> {
        self.accept_log.as_mut().map(core::mem::take).unwrap_or_default()
    }

    fn local_now(&self, now: u64) -> u64 {
        now.saturating_add_signed(self.cfg.clock_offset)
    }

    pub fn is_cognizant(&self) -> bool {
        self.cognizant
    }

    pub fn fingerprint(&self) -> Option<&Fingerprint> {
        self.fingerprint.as_ref()
    }

    pub fn held_piece_indices(&self) -> impl Iterator<Item = u16> + '_ {
        self.pieces.keys().copied()
    }

    pub fn piece(&self, index: u16) -> Option<&CrlPiece> {
        self.pieces.get(&index)
    }

    pub fn missing_indices(&self) -> Vec<u16> {
        let Some(fp) = &self.fingerprint else {
            return Vec::new();
        };
        (0..fp.piece_count as u16).filter(|i| !self.pieces.contains_key(i)).collect()
    }

    pub fn delta_buffer_bytes(&self) -> usize {
        self.delta_buffer_bytes
    }

    pub fn known_key(&self, local_interval: u32) -> Option<&Digest> {
        self.known_keys.get(&local_interval)
    }

    /// Number of (interval, serial) pairs currently stored.
    pub fn store_len(&self) -> usize {
        self.store.values().map(Vec::len).sum()
    }

    pub fn store_iter(&self) -> impl Iterator<Item = (u32, &Digest)> {
        self.store.iter().flat_map(|(iv, v)| v.iter().map(move |d| (*iv, d)))
    }

    /// Accept a fingerprint if its signature verifies and it is not older
    /// than the one held. A newer (Γ_CRL, version) resets piece collection.
    pub fn handle_fingerprint(&mut self, fp: &Fingerprint, _now: u64) -> bool {
        if !fp.verify(&self.cfg.issuer_pub) {
            self.counters.fingerprints_bad_sig += 1;
            self.counters.misbehavior += 1;
            return false;
        }
        let incoming = (fp.gamma_crl_index, fp.crl_version);
        if let Some(cur) = &self.fingerprint {
            let current = (cur.gamma_crl_index, cur.crl_version);
            if incoming < current {
                self.counters.fingerprints_stale += 1;
                return false;
            }
            if incoming == current {
                self.counters.fingerprints_accepted += 1;
                return true;
            }
            // Newer: restart collection; a new Γ_CRL also voids the anchor,
            // buffered deltas, and disclosed keys of the old one.
            self.pieces.clear();
            self.cognizant = false;
            if fp.gamma_crl_index != cur.gamma_crl_index {
                self.anchor = None;
                self.delta_buffer.clear();
                self.delta_buffer_bytes = 0;
                self.known_keys.clear();
            }
        }
        self.fingerprint = Some(fp.clone());
        self.counters.fingerprints_accepted += 1;
        if self.fingerprint.as_ref().map(|f| f.piece_count) == Some(0) {
            // An empty CRL makes the vehicle cognizant at once.
            self.cognizant = true;
        }
        true
    }

    /// Validate a received base piece against the held fingerprint and merge
    /// its entries. Pieces arriving before any fingerprint are dropped.
    pub fn handle_piece(&mut self, encoded: &[u8], _now: u64) -> bool {
        let Some(fp) = &self.fingerprint else {
            self.counters.pieces_before_fingerprint += 1;
            return false;
        };
        if !fp.contains_piece(&wire::piece_digest(encoded)) {
            self.counters.pieces_rejected_bf += 1;
            self.counters.misbehavior += 1;
            return false;
        }
        let piece = match wire::decode_crl_piece(encoded) {
            Ok(p) => p,
            Err(_) => {
                self.counters.pieces_rejected_malformed += 1;
                self.counters.misbehavior += 1;
                return false;
            }
        };
        if piece.gamma_crl_index != fp.gamma_crl_index
            || piece.crl_version != fp.crl_version
            || piece.total_pieces as u32 != fp.piece_count
        {
            self.counters.pieces_rejected_malformed += 1;
            self.counters.misbehavior += 1;
            return false;
        }
        if self.pieces.contains_key(&piece.piece_index) {
            self.counters.pieces_duplicate += 1;
            return false;
        }
        let parsed = match parse_crl_piece(&piece, self.cfg.max_entry_span) {
            Ok(p) => p,
            Err(_) => {
                self.counters.pieces_rejected_malformed += 1;
                self.counters.misbehavior += 1;
                return false;
            }
        };
        if self.anchor.is_none() {
            if !KeySchedule::verify_anchor(
                piece.gamma_crl_index,
                &piece.tesla_anchor,
                &piece.anchor_signature,
                &self.cfg.issuer_pub,
            ) {
                self.counters.pieces_rejected_malformed += 1;
                self.counters.misbehavior += 1;
                return false;
            }
            self.anchor = Some(piece.tesla_anchor);
        }
        let total = fp.piece_count;
        for (serial, interval) in parsed {
            self.insert_serial(serial, interval);
        }
        self.pieces.insert(piece.piece_index, piece);
        self.counters.pieces_accepted += 1;
        if self.pieces.len() as u32 == total {
            self.cognizant = true;
        }
        true
    }

    fn insert_serial(&mut self, serial: Digest, interval: u32) {
        let bucket = self.store.entry(interval).or_default();
        if let Err(pos) = bucket.binary_search(&serial) {
            bucket.insert(pos, serial);
        }
    }

    /// Buffer a delta piece for later MAC validation, subject to the TESLA
    /// safety condition, the per-sender rate limit, and the memory cap.
    pub fn buffer_delta_piece(&mut self, encoded: &[u8], sender: u64, now: u64) -> DeltaOutcome {
        let piece = match wire::decode_delta_piece(encoded) {
            Ok(p) => p,
            Err(_) => {
                self.counters.misbehavior += 1;
                return DeltaOutcome::RejectedMalformed;
            }
        };
        let local_now = self.local_now(now);
        let params = self.cfg.params;
        if piece.gamma_crl_index != params.gamma_crl_of(local_now)
            || piece.interval_index == 0
            || piece.interval_index > params.intervals_per_gamma_crl()
        {
            return DeltaOutcome::RejectedScope;
        }
        // TESLA safety: the piece must arrive before the key disclosure time
        // as seen by the worst-case local clock; afterwards it could have
        // been forged with the released key.
        let disclosure = params.disclosure_time(
            piece.gamma_crl_index,
            piece.interval_index,
            self.cfg.disclosure_mode,
        );
        if self.known_keys.contains_key(&piece.interval_index)
            || local_now.saturating_add(self.cfg.max_drift) >= disclosure
        {
            self.counters.delta_rejected_late += 1;
            return DeltaOutcome::RejectedLate;
        }
        let cfg_rate = self.cfg.sender_rate_bytes_per_sec;
        let cfg_burst = self.cfg.sender_burst_bytes;
        let limiter = self
            .limiters
            .entry(sender)
            .or_insert_with(|| SenderLimiter::new(cfg_burst, cfg_rate, now));
        if !limiter.admit(encoded.len(), now, self.cfg.mute_duration) {
            self.counters.delta_rejected_rate += 1;
            return DeltaOutcome::RejectedRateLimit;
        }
        if self.delta_buffer_bytes + encoded.len() > self.cfg.delta_buffer_cap_bytes {
            self.counters.delta_rejected_cap += 1;
            return DeltaOutcome::RejectedBufferCap;
        }
        let prev_key = piece.disclosed_prev_key;
        let prev_interval = piece.interval_index - 1;
        self.delta_buffer_bytes += encoded.len();
        self.delta_buffer.entry(piece.interval_index).or_default().push(piece);
        self.counters.delta_buffered += 1;
        // The carried K_{i-1} may settle the previous interval's buffer.
        if prev_interval >= 1 && !self.known_keys.contains_key(&prev_interval) {
            self.validate_on_key_disclosure(prev_interval, &prev_key);
        }
        DeltaOutcome::Buffered
    }

    /// Process a disclosed interval key: check it against the signed anchor,
    /// then MAC-validate every piece buffered for that interval. Returns
    /// `None` (key ignored) when the anchor check fails or no anchor is held
    /// yet, otherwise `(accepted, rejected)` piece counts.
    pub fn validate_on_key_disclosure(
        &mut self,
        local_interval: u32,
        key: &Digest,
    ) -> Option<(u32, u32)> {
        if local_interval == 0 {
            return None;
        }
        let anchor = self.anchor?;
        if !verify_key_against_anchor(key, local_interval, &anchor) {
            self.counters.keys_rejected += 1;
            self.counters.misbehavior += 1;
            return None;
        }
        if self.known_keys.contains_key(&local_interval) {
            return Some((0, 0));
        }
        self.counters.keys_accepted += 1;
        let mut totals = self.apply_key(local_interval, *key);
        // A valid K_i also derives every earlier key; settle any stale
        // buffers left from missed disclosures.
        let stale: Vec<u32> = self
            .delta_buffer
            .keys()
            .copied()
            .filter(|iv| *iv < local_interval && !self.known_keys.contains_key(iv))
            .collect();
        for iv in stale {
            let derived = crate::crypto::chain_step_n(key, local_interval - iv);
            let t = self.apply_key(iv, derived);
            totals.0 += t.0;
            totals.1 += t.1;
        }
        Some(totals)
    }

    fn apply_key(&mut self, local_interval: u32, key: Digest) -> (u32, u32) {
        self.known_keys.insert(local_interval, key);
        let (_, mac_key) = derive_interval_keys(&key, local_interval);
        let Some(buffered) = self.delta_buffer.remove(&local_interval) else {
            return (0, 0);
        };
        let params = self.cfg.params;
        let mut accepted = 0;
        let mut rejected = 0;
        for piece in buffered {
            self.delta_buffer_bytes = self
                .delta_buffer_bytes
                .saturating_sub(wire::delta_piece_wire_len(piece.serials.len()));
            if mac_verify(&mac_key, &wire::delta_mac_payload(&piece), &piece.mac) {
                let abs_interval =
                    params.absolute_interval(piece.gamma_crl_index, local_interval);
                for serial in &piece.serials {
                    self.insert_serial(*serial, abs_interval);
                    if let Some(log) = &mut self.accept_log {
                        log.push((abs_interval, *serial));
                    }
                }
                accepted += 1;
                self.counters.delta_accepted += 1;
            } else {
                rejected += 1;
                self.counters.delta_forged += 1;
                self.counters.misbehavior += 1;
            }
        }
        (accepted, rejected)
    }

    /// Handle an RSU key-disclosure broadcast.
    pub fn handle_key_disclosure(&mut self, kd: &wire::KeyDisclosure, now: u64) -> Option<(u32, u32)> {
        let local_now = self.local_now(now);
        if kd.gamma_crl_index != self.cfg.params.gamma_crl_of(local_now) {
            return None;
        }
        self.validate_on_key_disclosure(kd.interval_index, &kd.key)
    }

    /// O(log n) membership test against the local store.
    pub fn is_revoked(&self, serial: &Digest, abs_interval: u32) -> bool {
        self.store
            .get(&abs_interval)
            .is_some_and(|bucket| bucket.binary_search(serial).is_ok())
    }

    /// Drop store buckets and delta buffers for intervals that ended before
    /// the local clock's current interval.
    pub fn prune_expired(&mut self, now: u64) {
        let current = self.cfg.params.interval_of(self.local_now(now));
        self.store.retain(|iv, _| *iv >= current);
        let params = self.cfg.params;
        if let Some(fp) = &self.fingerprint {
            let gc = fp.gamma_crl_index;
            let mut removed = 0;
            self.delta_buffer.retain(|local, pieces| {
                let keep = params.absolute_interval(gc, *local) >= current;
                if !keep {
                    removed += pieces
                        .iter()
                        .map(|p| wire::delta_piece_wire_len(p.serials.len()))
                        .sum::<usize>();
                }
                keep
            });
            self.delta_buffer_bytes = self.delta_buffer_bytes.saturating_sub(removed);
        }
    }

    /// Build a signed request for the pieces still missing, or `None` when
    /// cognizant or without a fingerprint.
    pub fn make_piece_request(
        &self,
        requester: Pseudonym,
        holder_key: &SigningKey,
    ) -> Option<PieceRequest> {
        let fp = self.fingerprint.as_ref()?;
        let missing = self.missing_indices();
        if missing.is_empty() {
            return None;
        }
        Some(PieceRequest::build(
            fp.gamma_crl_index,
            fp.crl_version,
            missing,
            requester,
            holder_key,
        ))
    }

    /// Answer a neighbor's request with one uniformly chosen piece from the
    /// intersection of what it wants and what this vehicle holds.
    pub fn answer_request<R: RngCore>(
        &mut self,
        req: &PieceRequest,
        now: u64,
        rng: &mut R,
    ) -> Option<&CrlPiece> {
        let local_now = self.local_now(now);
        if !req.requester.verify(&self.cfg.issuer_pub) || !req.requester.is_valid_at(local_now) {
            self.counters.misbehavior += 1;
            return None;
        }
        if !req
            .requester
            .public_key
            .verify(&wire::piece_request_signed_payload(req), &req.signature)
        {
            self.counters.misbehavior += 1;
            return None;
        }
        let fp = self.fingerprint.as_ref()?;
        if req.gamma_crl_index != fp.gamma_crl_index || req.crl_version != fp.crl_version {
            return None;
        }
        let candidates: Vec<u16> = req
            .missing
            .iter()
            .copied()
            .filter(|i| self.pieces.contains_key(i))
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let pick = candidates[(rng.next_u32() as usize) % candidates.len()];
        self.counters.requests_answered += 1;
        self.pieces.get(&pick)
    }
}

/// Expand every entry of a base piece into `(serial, absolute interval)`
/// pairs, sorted by interval. Entries spanning more than `max_entry_span`
/// intervals are treated as malformed.
pub fn parse_crl_piece(
    piece: &CrlPiece,
    max_entry_span: u16,
) -> Result<Vec<(Digest, u32)>, Error> {
    let mut out = Vec::new();
    for entry in &piece.entries {
        if entry.remaining > max_entry_span {
            return Err(Error::Decode("entry expansion span too large"));
        }
        out.extend(expand_entry_with_intervals(entry));
    }
    out.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::authority::RevocationAuthority;
    use crate::crypto::SchemeId;
    use crate::params::secs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    const KB10: u32 = 10 * 1024;

    struct Fixture {
        auth: RevocationAuthority,
        rng: ChaCha12Rng,
        holder: SigningKey,
    }

    fn fixture(tau_s: u64, gamma_s: u64, gamma_crl_s: u64) -> Fixture {
        let params =
            ProtocolParams::new(secs(tau_s), secs(gamma_s), secs(gamma_crl_s)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7777);
        let key = SigningKey::generate(SchemeId::Mock, &mut rng);
        let holder = SigningKey::generate(SchemeId::Mock, &mut rng);
        Fixture { auth: RevocationAuthority::new(params, key, 1e-20), rng, holder }
    }

    fn vehicle(f: &Fixture) -> VehicleCrlState {
        VehicleCrlState::new(VehicleConfig::new(
            *f.auth.params(),
            f.auth.public_key(),
            KB10,
        ))
    }

    fn revoked_base(f: &mut Fixture, n: usize, bandwidth: u32) -> crate::authority::BaseCrl {
        let holder_pub = f.holder.verifying_key();
        for _ in 0..n {
            let id = f.auth.issue(0, false, None, holder_pub.clone(), &mut f.rng).unwrap();
            let first = f.auth.batch(id).unwrap().first_interval(f.auth.params());
            f.auth.revoke(id, first, 0).unwrap();
        }
        f.auth.build_base_crl(0, bandwidth, 0, &mut f.rng).unwrap()
    }

    #[test]
    fn fingerprint_version_rules() {
        let mut f = fixture(60, 360, 3600);
        let base1 = revoked_base(&mut f, 2, KB10);
        let base2 = f.auth.build_base_crl(0, KB10, 0, &mut f.rng).unwrap(); // version 2
        let mut v = vehicle(&f);

        assert!(v.handle_fingerprint(&base2.fingerprint, 0));
        // Replay of the older version is discarded.
        assert!(!v.handle_fingerprint(&base1.fingerprint, 0));
        assert_eq!(v.counters.fingerprints_stale, 1);
        // Same version re-announced is fine (idempotent).
        assert!(v.handle_fingerprint(&base2.fingerprint, 0));

        let mut forged = base2.fingerprint.clone();
        forged.crl_version += 1;
        assert!(!v.handle_fingerprint(&forged, 0));
        assert_eq!(v.counters.fingerprints_bad_sig, 1);
    }

    #[test]
    fn version_bump_resets_piece_collection() {
        let mut f = fixture(60, 360, 3600);
        let base1 = revoked_base(&mut f, 2, KB10);
        let mut v = vehicle(&f);
        assert!(v.handle_fingerprint(&base1.fingerprint, 0));
        for p in &base1.pieces {
            assert!(v.handle_piece(&wire::encode_crl_piece(p), 0));
        }
        assert!(v.is_cognizant());

        let base2 = f.auth.build_base_crl(0, KB10, 0, &mut f.rng).unwrap();
        assert!(v.handle_fingerprint(&base2.fingerprint, 1));
        assert!(!v.is_cognizant());
        assert_eq!(v.held_piece_indices().count(), 0);
    }

    #[test]
    fn empty_crl_cognizant_on_fingerprint() {
        let mut f = fixture(60, 360, 3600);
        let base = f.auth.build_base_crl(0, KB10, 0, &mut f.rng).unwrap();
        let mut v = vehicle(&f);
        assert!(v.handle_fingerprint(&base.fingerprint, 0));
        assert!(v.is_cognizant());
    }

    #[test]
    fn piece_paths_accept_reject_duplicate() {
        let mut f = fixture(60, 360, 3600);
        let base = revoked_base(&mut f, 3, KB10);
        let mut v = vehicle(&f);
        let enc0 = wire::encode_crl_piece(&base.pieces[0]);

        // Before any fingerprint: dropped.
        assert!(!v.handle_piece(&enc0, 0));
        assert_eq!(v.counters.pieces_before_fingerprint, 1);

        assert!(v.handle_fingerprint(&base.fingerprint, 0));
        assert!(v.handle_piece(&enc0, 0));
        assert!(!v.handle_piece(&enc0, 0), "duplicate is ignored");
        assert_eq!(v.counters.pieces_duplicate, 1);

        // A tampered piece fails the Bloom test.
        let mut forged = enc0.clone();
        let last = forged.len() - 1;
        forged[last] ^= 0xff;
        assert!(!v.handle_piece(&forged, 0));
        assert_eq!(v.counters.pieces_rejected_bf, 1);
        assert!(v.store_len() > 0);
    }

    #[test]
    fn parse_piece_examples() {
        let mut f = fixture(60, 360, 3600);
        // One full-batch revocation: D = 6 pairs over 6 consecutive intervals.
        let holder_pub = f.holder.verifying_key();
        let id = f.auth.issue(0, false, None, holder_pub, &mut f.rng).unwrap();
        f.auth.revoke(id, 0, 0).unwrap();
        let base = f.auth.build_base_crl(0, KB10, 0, &mut f.rng).unwrap();
        let parsed = parse_crl_piece(&base.pieces[0], 4096).unwrap();
        assert_eq!(parsed.len(), 6);
        for (off, (_, iv)) in parsed.iter().enumerate() {
            assert_eq!(*iv, off as u32);
        }

        // remaining = 0 entry parses to exactly one pair.
        let entry = crate::credentials::make_revocation_entry(
            f.auth.batch(id).unwrap(),
            6,
            f.auth.params(),
        )
        .unwrap();
        let single = CrlPiece { entries: alloc::vec![entry], ..base.pieces[0].clone() };
        assert_eq!(parse_crl_piece(&single, 4096).unwrap().len(), 1);

        // Entries with remaining 1, 2, 3 expand to 2 + 3 + 4 = 9 pairs.
        let mk = |i: u16| {
            crate::credentials::make_revocation_entry(
                f.auth.batch(id).unwrap(),
                i,
                f.auth.params(),
            )
            .unwrap()
        };
        let multi = CrlPiece {
            entries: alloc::vec![mk(5), mk(4), mk(3)],
            ..base.pieces[0].clone()
        };
        assert_eq!(parse_crl_piece(&multi, 4096).unwrap().len(), 9);
        assert!(parse_crl_piece(&multi, 2).is_err());
    }

    #[test]
    fn is_revoked_and_pruning() {
        let mut f = fixture(60, 360, 360);
        let holder_pub = f.holder.verifying_key();
        let id = f.auth.issue(0, false, None, holder_pub, &mut f.rng).unwrap();
        f.auth.revoke(id, 0, 0).unwrap();
        let base = f.auth.build_base_crl(0, KB10, 0, &mut f.rng).unwrap();
        let mut v = vehicle(&f);
        v.handle_fingerprint(&base.fingerprint, 0);
        v.handle_piece(&wire::encode_crl_piece(&base.pieces[0]), 0);

        let batch = f.auth.batch(id).unwrap();
        assert!(v.is_revoked(&batch.pseudonyms[0].serial, 0));
        assert!(v.is_revoked(&batch.pseudonyms[3].serial, 3));
        assert!(!v.is_revoked(&batch.pseudonyms[3].serial, 2));
        assert!(!v.is_revoked(&Digest([9; 32]), 0));

        // After two intervals pass, the first two buckets are pruned.
        v.prune_expired(secs(120));
        assert!(!v.is_revoked(&batch.pseudonyms[0].serial, 0));
        assert!(v.is_revoked(&batch.pseudonyms[3].serial, 3));
    }

    #[test]
    fn request_answering_rules() {
        let mut f = fixture(60, 360, 3600);
        let base = revoked_base(&mut f, 40, 2048);
        assert!(base.pieces.len() >= 2, "need multiple pieces");
        let mut holder_rng = ChaCha12Rng::seed_from_u64(1);
        let mut v = vehicle(&f);
        v.handle_fingerprint(&base.fingerprint, 0);
        v.handle_piece(&wire::encode_crl_piece(&base.pieces[0]), 0);

        let holder_pub = f.holder.verifying_key();
        let req_batch_id =
            f.auth.issue(0, false, None, holder_pub, &mut f.rng).unwrap();
        let requester = f.auth.batch(req_batch_id).unwrap().pseudonyms[0].clone();

        // Intersection {0}: always piece 0.
        let req = PieceRequest::build(0, 1, alloc::vec![0, 1], requester.clone(), &f.holder);
        let got = v.answer_request(&req, 0, &mut holder_rng).unwrap();
        assert_eq!(got.piece_index, 0);

        // Disjoint: nothing.
        let req = PieceRequest::build(0, 1, alloc::vec![1], requester.clone(), &f.holder);
        assert!(v.answer_request(&req, 0, &mut holder_rng).is_none());

        // Wrong signing key: ignored.
        let wrong_key = SigningKey::generate(SchemeId::Mock, &mut holder_rng);
        let req = PieceRequest::build(0, 1, alloc::vec![0], requester.clone(), &wrong_key);
        assert!(v.answer_request(&req, 0, &mut holder_rng).is_none());

        // Expired pseudonym: ignored (validity ended at Γ end = 360 s).
        let req = PieceRequest::build(0, 1, alloc::vec![0], requester, &f.holder);
        assert!(v.answer_request(&req, secs(400), &mut holder_rng).is_none());
    }

    #[test]
    fn answered_piece_is_uniform_over_intersection() {
        let mut f = fixture(60, 360, 3600);
        let base = revoked_base(&mut f, 40, 2048);
        let mut v = vehicle(&f);
        v.handle_fingerprint(&base.fingerprint, 0);
        v.handle_piece(&wire::encode_crl_piece(&base.pieces[0]), 0);
        v.handle_piece(&wire::encode_crl_piece(&base.pieces[1]), 0);

        let holder_pub = f.holder.verifying_key();
        let req_batch =
            f.auth.issue(0, false, None, holder_pub, &mut f.rng).unwrap();
        let requester = f.auth.batch(req_batch).unwrap().pseudonyms[0].clone();
        let req = PieceRequest::build(0, 1, alloc::vec![0, 1], requester, &f.holder);

        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let trials = 10_000;
        let mut zero = 0u32;
        for _ in 0..trials {
            if v.answer_request(&req, 0, &mut rng).unwrap().piece_index == 0 {
                zero += 1;
            }
        }
        // Chi-square with 1 dof; 10.83 is the 0.001 critical value.
        let expected = trials as f64 / 2.0;
        let chi2 = 2.0 * (zero as f64 - expected) * (zero as f64 - expected) / expected;
        assert!(chi2 < 10.83, "chi2 = {chi2} (zero = {zero})");
    }
}
