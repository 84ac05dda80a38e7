//! Property tests: every emitted piece respects the byte budget, splitting
//! follows the ceil formula, and wire encodings round-trip.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use vcrl_core::authority::{DeltaCrlPiece, RevocationAuthority};
use vcrl_core::crypto::{Digest, SchemeId, SigningKey};
use vcrl_core::params::{secs, ProtocolParams};
use vcrl_core::wire;

fn build_authority(revoked: usize, seed: u64) -> (RevocationAuthority, ChaCha12Rng) {
    let params = ProtocolParams::new(secs(60), secs(60), secs(3600)).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let pca = SigningKey::generate(SchemeId::Mock, &mut rng);
    let mut auth = RevocationAuthority::new(params, pca, 1e-20);
    let holder = SigningKey::generate(SchemeId::Mock, &mut rng).verifying_key();
    for i in 0..revoked {
        let id = auth
            .issue((i % 60) as u32 + 60, false, None, holder.clone(), &mut rng)
            .unwrap();
        let first = auth.batch(id).unwrap().first_interval(auth.params());
        auth.revoke(id, first, 0).unwrap();
    }
    (auth, rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn base_pieces_respect_budget(revoked in 1usize..400, bw in 600u32..20_000) {
        let (mut auth, mut rng) = build_authority(revoked, 7);
        let base = auth.build_base_crl(1, bw, 0, &mut rng).unwrap();
        let total: usize = base.pieces.iter().map(|p| p.entries.len()).sum();
        prop_assert_eq!(total, revoked);
        let min_pieces = (revoked * wire::ENTRY_WIRE_LEN).div_ceil(bw as usize).max(1);
        prop_assert!(base.pieces.len() >= min_pieces);
        for p in &base.pieces {
            let enc = wire::encode_crl_piece(p);
            prop_assert!(enc.len() <= bw as usize, "piece {} > budget {}", enc.len(), bw);
            prop_assert_eq!(wire::decode_crl_piece(&enc).unwrap(), p.clone());
            prop_assert!(base.fingerprint.contains_piece(&wire::piece_digest(&enc)));
        }
    }

    #[test]
    fn delta_pieces_respect_budget(revoked in 1usize..300, bw in 150u32..8_000) {
        let (mut auth, mut rng) = build_authority(0, 11);
        let holder = SigningKey::generate(SchemeId::Mock, &mut rng).verifying_key();
        auth.build_base_crl(1, 10_240, 0, &mut rng).unwrap();
        // Events after the base build, all hitting local interval 2.
        let abs = auth.params().absolute_interval(1, 2);
        for _ in 0..revoked {
            let id = auth.issue(abs, false, None, holder.clone(), &mut rng).unwrap();
            auth.revoke(id, abs, secs(3605)).unwrap();
        }
        let key = *auth.schedule(1).unwrap().key(2).unwrap();
        let pieces = auth.gen_delta_crl(1, 2, &key, bw, secs(3630)).unwrap();
        let total: usize = pieces.iter().map(|p| p.serials.len()).sum();
        prop_assert_eq!(total, revoked);
        for p in &pieces {
            let enc = wire::encode_delta_piece(p);
            prop_assert!(enc.len() <= bw as usize);
            prop_assert_eq!(wire::decode_delta_piece(&enc).unwrap(), p.clone());
        }
    }

    #[test]
    fn delta_wire_roundtrip(
        gamma in 0u32..1000,
        interval in 1u32..60,
        count in 0usize..40,
        fill in any::<u8>(),
    ) {
        let piece = DeltaCrlPiece {
            gamma_crl_index: gamma,
            interval_index: interval,
            piece_index: 0,
            total_pieces: 1,
            serials: (0..count).map(|i| Digest([fill.wrapping_add(i as u8); 32])).collect(),
            disclosed_prev_key: Digest([fill; 32]),
            mac: Digest([fill.wrapping_mul(3); 32]),
        };
        let enc = wire::encode_delta_piece(&piece);
        prop_assert_eq!(enc.len(), wire::delta_piece_wire_len(count));
        prop_assert_eq!(wire::decode_delta_piece(&enc).unwrap(), piece);
    }
}
