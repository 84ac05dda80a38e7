//! End-to-end security properties of the delta-CRL path: forged MACs never
//! land in the revocation store, late pieces are refused, keys failing the
//! anchor check are ignored, and floods stay within the buffer budget.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use vcrl_core::authority::{DeltaCrlPiece, RevocationAuthority};
use vcrl_core::crypto::{Digest, SchemeId, SigningKey};
use vcrl_core::params::{secs, DisclosureMode, ProtocolParams};
use vcrl_core::vehicle::{DeltaOutcome, VehicleConfig, VehicleCrlState};
use vcrl_core::wire;

const KB10: u32 = 10 * 1024;

struct World {
    auth: RevocationAuthority,
    rng: ChaCha12Rng,
}

fn world() -> World {
    let params = ProtocolParams::new(secs(60), secs(3600), secs(3600)).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let key = SigningKey::generate(SchemeId::Mock, &mut rng);
    World { auth: RevocationAuthority::new(params, key, 1e-20), rng }
}

/// Vehicle that has processed the (possibly empty) base CRL, so it holds the
/// fingerprint and the signed anchor.
fn synced_vehicle(w: &mut World) -> VehicleCrlState {
    let holder = SigningKey::generate(SchemeId::Mock, &mut w.rng).verifying_key();
    let id = w.auth.issue(0, false, None, holder, &mut w.rng).unwrap();
    w.auth.revoke(id, 0, 0).unwrap();
    let base = w.auth.build_base_crl(0, KB10, 0, &mut w.rng).unwrap();
    let mut v = VehicleCrlState::new(VehicleConfig::new(
        *w.auth.params(),
        w.auth.public_key(),
        KB10,
    ));
    assert!(v.handle_fingerprint(&base.fingerprint, 0));
    for p in &base.pieces {
        assert!(v.handle_piece(&wire::encode_crl_piece(p), 0));
    }
    assert!(v.is_cognizant());
    v
}

#[test]
fn genuine_pieces_accepted_on_genuine_key() {
    let mut w = world();
    let mut v = synced_vehicle(&mut w);

    // New revocation during interval 4 (t in [240, 300)), valid from
    // interval 5 onward; delta for interval 5 is distributed during 4.
    let holder = SigningKey::generate(SchemeId::Mock, &mut w.rng).verifying_key();
    let id = w.auth.issue(0, false, None, holder, &mut w.rng).unwrap();
    w.auth.revoke(id, 5, secs(250)).unwrap();
    let k5 = *w.auth.schedule(0).unwrap().key(6).unwrap();
    // Local interval 6 == absolute interval 5 here (Γ_CRL 0).
    let pieces = w.auth.gen_delta_crl(0, 6, &k5, KB10, secs(255)).unwrap();
    assert!(!pieces.is_empty());

    let now = secs(260); // still inside interval 4
    for p in &pieces {
        let enc = wire::encode_delta_piece(p);
        assert_eq!(v.buffer_delta_piece(&enc, 1, now), DeltaOutcome::Buffered);
    }
    // Key released at the interval-6 boundary (t = 300 s).
    let key = w
        .auth
        .disclose_key(0, 6, secs(300), DisclosureMode::Strict)
        .unwrap();
    let (accepted, rejected) = v.validate_on_key_disclosure(6, &key).unwrap();
    assert_eq!(accepted as usize, pieces.len());
    assert_eq!(rejected, 0);
    let serial = w.auth.batch(id).unwrap().pseudonyms[5].serial;
    assert!(v.is_revoked(&serial, 5));
}

#[test]
fn forged_macs_are_never_accepted() {
    let mut w = world();
    let mut v = synced_vehicle(&mut w);
    // Wide-open buffer and rate limits: every forgery must reach the MAC
    // check itself and die there.
    v.cfg.delta_buffer_cap_bytes = 64 << 20;
    v.cfg.sender_rate_bytes_per_sec = 1e12;
    v.cfg.sender_burst_bytes = 1e12;

    let interval = 6u32;
    let now = secs(260);
    let mut forged_count = 0u32;
    for i in 0..10_000u32 {
        let mut serial = [0u8; 32];
        w.rng.fill_bytes(&mut serial);
        let mut mac = [0u8; 32];
        w.rng.fill_bytes(&mut mac);
        let mut prev_key = [0u8; 32];
        w.rng.fill_bytes(&mut prev_key);
        let piece = DeltaCrlPiece {
            gamma_crl_index: 0,
            interval_index: interval,
            piece_index: 0,
            total_pieces: 1,
            serials: vec![Digest(serial)],
            disclosed_prev_key: Digest(prev_key),
            mac: Digest(mac),
        };
        let enc = wire::encode_delta_piece(&piece);
        let outcome = v.buffer_delta_piece(&enc, 100 + (i as u64 % 50), now);
        assert_eq!(outcome, DeltaOutcome::Buffered);
        forged_count += 1;
    }
    assert_eq!(forged_count, 10_000);

    let key = w
        .auth
        .disclose_key(0, interval, secs(300), DisclosureMode::Strict)
        .unwrap();
    let (accepted, rejected) = v.validate_on_key_disclosure(interval, &key).unwrap();
    assert_eq!(accepted, 0, "no forged piece may validate");
    assert_eq!(rejected, 10_000);
    assert_eq!(v.store_len(), 60, "only the base-CRL serials remain");
    assert_eq!(v.counters.delta_forged, 10_000);
    assert_eq!(v.delta_buffer_bytes(), 0, "buffer slot cleared");
}

#[test]
fn pieces_after_key_disclosure_are_rejected() {
    let mut w = world();
    let mut v = synced_vehicle(&mut w);

    let holder = SigningKey::generate(SchemeId::Mock, &mut w.rng).verifying_key();
    let id = w.auth.issue(0, false, None, holder, &mut w.rng).unwrap();
    w.auth.revoke(id, 5, secs(250)).unwrap();
    let k6 = *w.auth.schedule(0).unwrap().key(6).unwrap();
    let pieces = w.auth.gen_delta_crl(0, 6, &k6, KB10, secs(255)).unwrap();
    let enc = wire::encode_delta_piece(&pieces[0]);

    // Genuine piece, but arriving at the disclosure boundary: refused.
    assert_eq!(
        v.buffer_delta_piece(&enc, 1, secs(300)),
        DeltaOutcome::RejectedLate
    );
    // And any time after.
    assert_eq!(
        v.buffer_delta_piece(&enc, 1, secs(310)),
        DeltaOutcome::RejectedLate
    );
    // Once the key is known, even an in-window arrival is refused.
    let mut v2 = synced_vehicle(&mut w);
    let key = w.auth.disclose_key(0, 2, secs(60), DisclosureMode::Strict).unwrap();
    assert!(v2.validate_on_key_disclosure(2, &key).is_some());
    let early_piece = DeltaCrlPiece {
        gamma_crl_index: 0,
        interval_index: 2,
        piece_index: 0,
        total_pieces: 1,
        serials: vec![Digest([1; 32])],
        disclosed_prev_key: Digest([2; 32]),
        mac: Digest([3; 32]),
    };
    assert_eq!(
        v2.buffer_delta_piece(&wire::encode_delta_piece(&early_piece), 1, secs(30)),
        DeltaOutcome::RejectedLate
    );
}

#[test]
fn clock_drift_narrows_the_acceptance_window() {
    let mut w = world();
    let mut v = synced_vehicle(&mut w);
    // Vehicle clock may be up to 2 s fast or slow.
    v.cfg.max_drift = secs(2);

    let holder = SigningKey::generate(SchemeId::Mock, &mut w.rng).verifying_key();
    let id = w.auth.issue(0, false, None, holder, &mut w.rng).unwrap();
    w.auth.revoke(id, 5, secs(250)).unwrap();
    let k6 = *w.auth.schedule(0).unwrap().key(6).unwrap();
    let pieces = w.auth.gen_delta_crl(0, 6, &k6, KB10, secs(255)).unwrap();
    let enc = wire::encode_delta_piece(&pieces[0]);

    // 1 s before disclosure is inside the drift margin: refused.
    assert_eq!(v.buffer_delta_piece(&enc, 1, secs(299)), DeltaOutcome::RejectedLate);
    // 3 s before disclosure clears the margin.
    assert_eq!(v.buffer_delta_piece(&enc, 1, secs(297)), DeltaOutcome::Buffered);
}

#[test]
fn keys_failing_the_anchor_check_are_ignored() {
    let mut w = world();
    let mut v = synced_vehicle(&mut w);

    let holder = SigningKey::generate(SchemeId::Mock, &mut w.rng).verifying_key();
    let id = w.auth.issue(0, false, None, holder, &mut w.rng).unwrap();
    w.auth.revoke(id, 5, secs(250)).unwrap();
    let k6 = *w.auth.schedule(0).unwrap().key(6).unwrap();
    let pieces = w.auth.gen_delta_crl(0, 6, &k6, KB10, secs(255)).unwrap();
    for p in &pieces {
        assert!(v
            .buffer_delta_piece(&wire::encode_delta_piece(p), 1, secs(260))
            .buffered());
    }

    // Random forged key: ignored outright.
    let mut junk = [0u8; 32];
    w.rng.fill_bytes(&mut junk);
    assert!(v.validate_on_key_disclosure(6, &Digest(junk)).is_none());
    assert_eq!(v.counters.keys_rejected, 1);
    assert_eq!(v.counters.delta_accepted, 0);

    // A real key presented at the wrong depth: also ignored.
    assert!(v.validate_on_key_disclosure(5, &k6).is_none());

    // The genuine key still works afterwards.
    let (accepted, _) = v.validate_on_key_disclosure(6, &k6).unwrap();
    assert_eq!(accepted as usize, pieces.len());
}

#[test]
fn key_carried_in_next_interval_piece_validates_buffer() {
    let mut w = world();
    let mut v = synced_vehicle(&mut w);

    let holder = SigningKey::generate(SchemeId::Mock, &mut w.rng).verifying_key();
    let id = w.auth.issue(0, false, None, holder.clone(), &mut w.rng).unwrap();
    w.auth.revoke(id, 5, secs(250)).unwrap();
    let k6 = *w.auth.schedule(0).unwrap().key(6).unwrap();
    let p6 = w.auth.gen_delta_crl(0, 6, &k6, KB10, secs(255)).unwrap();
    assert!(v
        .buffer_delta_piece(&wire::encode_delta_piece(&p6[0]), 1, secs(260))
        .buffered());

    // Next interval's pieces carry K_6 (= H(K_7)); receiving one both
    // buffers it and settles the interval-6 buffer.
    let id2 = w.auth.issue(0, false, None, holder, &mut w.rng).unwrap();
    w.auth.revoke(id2, 6, secs(310)).unwrap();
    let k7 = *w.auth.schedule(0).unwrap().key(7).unwrap();
    let p7 = w.auth.gen_delta_crl(0, 7, &k7, KB10, secs(315)).unwrap();
    assert!(v
        .buffer_delta_piece(&wire::encode_delta_piece(&p7[0]), 1, secs(320))
        .buffered());

    assert_eq!(v.counters.delta_accepted, 1, "interval-6 piece validated");
    let serial = w.auth.batch(id).unwrap().pseudonyms[5].serial;
    assert!(v.is_revoked(&serial, 5));
    assert!(v.known_key(6).is_some());
}

#[test]
fn flooding_sender_is_muted_and_memory_bounded() {
    let mut w = world();
    let mut v = synced_vehicle(&mut w);
    v.cfg.delta_buffer_cap_bytes = 200_000;
    // Per-sender allowance: 2 KB/s with a 4 KB burst.
    v.cfg.sender_rate_bytes_per_sec = 2048.0;
    v.cfg.sender_burst_bytes = 4096.0;

    let mut buffered = 0u32;
    let mut rate_limited = 0u32;
    let piece_len = {
        let piece = DeltaCrlPiece {
            gamma_crl_index: 0,
            interval_index: 6,
            piece_index: 0,
            total_pieces: 1,
            serials: vec![Digest([0; 32]); 30],
            disclosed_prev_key: Digest([0; 32]),
            mac: Digest([0; 32]),
        };
        wire::encode_delta_piece(&piece).len()
    };
    for i in 0..200u32 {
        let piece = DeltaCrlPiece {
            gamma_crl_index: 0,
            interval_index: 6,
            piece_index: 0,
            total_pieces: 1,
            serials: vec![Digest([(i % 251) as u8; 32]); 30],
            disclosed_prev_key: Digest([0; 32]),
            mac: Digest([0; 32]),
        };
        let enc = wire::encode_delta_piece(&piece);
        match v.buffer_delta_piece(&enc, 42, secs(240) + (i as u64) * 10_000) {
            DeltaOutcome::Buffered => buffered += 1,
            DeltaOutcome::RejectedRateLimit => rate_limited += 1,
            other => panic!("unexpected outcome {other:?}"),
        }
    }
    assert!(buffered <= 5, "burst admits only a few pieces, got {buffered}");
    assert!(rate_limited >= 195);
    assert!(v.delta_buffer_bytes() <= buffered as usize * piece_len);
    assert!(v.delta_buffer_bytes() <= v.cfg.delta_buffer_cap_bytes);

    // A different, polite sender still gets through.
    let polite = DeltaCrlPiece {
        gamma_crl_index: 0,
        interval_index: 6,
        piece_index: 0,
        total_pieces: 1,
        serials: vec![Digest([9; 32])],
        disclosed_prev_key: Digest([0; 32]),
        mac: Digest([0; 32]),
    };
    assert!(v
        .buffer_delta_piece(&wire::encode_delta_piece(&polite), 43, secs(242))
        .buffered());
}

#[test]
fn buffer_cap_bounds_multi_sender_floods() {
    let mut w = world();
    let mut v = synced_vehicle(&mut w);
    v.cfg.delta_buffer_cap_bytes = 50_000;
    v.cfg.sender_rate_bytes_per_sec = 1e9;
    v.cfg.sender_burst_bytes = 1e9;

    let mut cap_hits = 0u32;
    for i in 0..2_000u32 {
        let piece = DeltaCrlPiece {
            gamma_crl_index: 0,
            interval_index: 6,
            piece_index: 0,
            total_pieces: 1,
            serials: vec![Digest([(i % 256) as u8; 32]); 2],
            disclosed_prev_key: Digest([0; 32]),
            mac: Digest([0; 32]),
        };
        let enc = wire::encode_delta_piece(&piece);
        if v.buffer_delta_piece(&enc, i as u64, secs(250)) == DeltaOutcome::RejectedBufferCap {
            cap_hits += 1;
        }
        assert!(v.delta_buffer_bytes() <= 50_000);
    }
    assert!(cap_hits > 0);
}
