//! Golden protocol vectors for cross-implementation testing: a chained
//! batch with a revocation entry and its expansion, a base-CRL piece set
//! with its fingerprint, and a delta piece with its key chain. Everything is
//! hex inside JSON and byte-stable for a given seed.

use std::path::Path;

use rand_chacha::ChaCha12Rng;
use rand_core::SeedableRng;
use serde::Serialize;

use vcrl_core::authority::RevocationAuthority;
use vcrl_core::credentials::{expand_entry, make_revocation_entry};
use vcrl_core::crypto::{SchemeId, SigningKey};
use vcrl_core::params::{secs, DisclosureMode, ProtocolParams};
use vcrl_core::wire;

#[derive(Serialize)]
struct BatchVector {
    seed: u64,
    tau_p_s: u64,
    gamma_s: u64,
    sn_anchor: String,
    rnd_seed: String,
    serials: Vec<String>,
    entry_from_index: u16,
    entry_wire: String,
    expansion: Vec<String>,
}

#[derive(Serialize)]
struct BaseCrlVector {
    seed: u64,
    issuer_public_key: String,
    crl_version: u32,
    tesla_anchor: String,
    pieces: Vec<String>,
    piece_digests: Vec<String>,
    fingerprint: String,
}

#[derive(Serialize)]
struct DeltaVector {
    seed: u64,
    interval: u32,
    key_chain_anchor: String,
    interval_key: String,
    mac_key: String,
    pieces: Vec<String>,
    key_disclosure: String,
}

fn hex32(d: &vcrl_core::crypto::Digest) -> String {
    hex::encode(d.0)
}

pub fn write_vectors(out_dir: &Path, seed: u64) -> Result<(), String> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| format!("create {}: {e}", out_dir.display()))?;
    let params = ProtocolParams::new(secs(60), secs(360), secs(3600)).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let pca = SigningKey::generate(SchemeId::Mock, &mut rng);
    let mut auth = RevocationAuthority::new(params, pca, 1e-20);
    let holder = SigningKey::generate(SchemeId::Mock, &mut rng).verifying_key();

    // Batch + entry + expansion.
    let id = auth
        .issue(0, false, None, holder.clone(), &mut rng)
        .map_err(|e| e.to_string())?;
    let batch = auth.batch(id).unwrap();
    let entry = make_revocation_entry(batch, 3, &params).map_err(|e| e.to_string())?;
    let mut entry_wire = Vec::new();
    wire::encode_entry(&mut entry_wire, &entry);
    let batch_vector = BatchVector {
        seed,
        tau_p_s: params.tau_p / 1_000_000,
        gamma_s: params.gamma / 1_000_000,
        sn_anchor: hex32(batch.sn_anchor()),
        rnd_seed: hex32(batch.rnd_seed()),
        serials: batch.pseudonyms.iter().map(|p| hex32(&p.serial)).collect(),
        entry_from_index: 3,
        entry_wire: hex::encode(&entry_wire),
        expansion: expand_entry(&entry).iter().map(hex32).collect(),
    };

    // Base CRL pieces + fingerprint: a few more revoked batches for bulk.
    for i in 0..5u32 {
        let id = auth
            .issue(0, false, None, holder.clone(), &mut rng)
            .map_err(|e| e.to_string())?;
        auth.revoke(id, i % 6, 0).map_err(|e| e.to_string())?;
    }
    auth.revoke(id, 2, 0).map_err(|e| e.to_string())?;
    let base = auth
        .build_base_crl(0, 2048, 0, &mut rng)
        .map_err(|e| e.to_string())?;
    let encoded: Vec<Vec<u8>> = base.pieces.iter().map(wire::encode_crl_piece).collect();
    let base_vector = BaseCrlVector {
        seed,
        issuer_public_key: hex::encode(auth.public_key().to_bytes()),
        crl_version: base.fingerprint.crl_version,
        tesla_anchor: hex32(auth.schedule(0).unwrap().anchor()),
        piece_digests: encoded.iter().map(|e| hex::encode(wire::piece_digest(e).0)).collect(),
        pieces: encoded.iter().map(hex::encode).collect(),
        fingerprint: hex::encode(wire::encode_fingerprint(&base.fingerprint)),
    };

    // Delta piece + key chain for interval 5 (event during interval 4).
    let vid = auth
        .issue(0, false, None, holder, &mut rng)
        .map_err(|e| e.to_string())?;
    auth.revoke(vid, 4, secs(210)).map_err(|e| e.to_string())?;
    let schedule = auth.schedule(0).unwrap();
    let key = *schedule.key(5).unwrap();
    let (_, mac_key) = vcrl_core::crypto::derive_interval_keys(&key, 5);
    let pieces = auth
        .gen_delta_crl(0, 5, &key, 2048, secs(215))
        .map_err(|e| e.to_string())?;
    let disclosure = wire::KeyDisclosure {
        gamma_crl_index: 0,
        interval_index: 5,
        key: auth
            .disclose_key(0, 5, secs(240), DisclosureMode::Strict)
            .map_err(|e| e.to_string())?,
    };
    let delta_vector = DeltaVector {
        seed,
        interval: 5,
        key_chain_anchor: hex32(auth.schedule(0).unwrap().anchor()),
        interval_key: hex32(&key),
        mac_key: hex::encode(mac_key.bytes),
        pieces: pieces.iter().map(|p| hex::encode(wire::encode_delta_piece(p))).collect(),
        key_disclosure: hex::encode(wire::encode_key_disclosure(&disclosure)),
    };

    fn write<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), String> {
        let json = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
        std::fs::write(dir.join(name), json + "\n").map_err(|e| format!("write {name}: {e}"))
    }
    write(out_dir, "batch_expansion.json", &batch_vector)?;
    write(out_dir, "base_crl.json", &base_vector)?;
    write(out_dir, "delta_crl.json", &delta_vector)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_regenerate_identically_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        write_vectors(&a, 7).unwrap();
        write_vectors(&b, 7).unwrap();
        for name in ["batch_expansion.json", "base_crl.json", "delta_crl.json"] {
            let fa = std::fs::read(a.join(name)).unwrap();
            let fb = std::fs::read(b.join(name)).unwrap();
            assert_eq!(fa, fb, "{name} not deterministic");
        }
        // A different seed must change the vectors.
        let c = dir.path().join("c");
        write_vectors(&c, 8).unwrap();
        assert_ne!(
            std::fs::read(a.join("base_crl.json")).unwrap(),
            std::fs::read(c.join("base_crl.json")).unwrap()
        );

        // The expansion vector re-verifies against the stored serials.
        let text = std::fs::read_to_string(a.join("batch_expansion.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let serials: Vec<String> = v["serials"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s.as_str().unwrap().to_string())
            .collect();
        let expansion: Vec<String> = v["expansion"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s.as_str().unwrap().to_string())
            .collect();
        let from = v["entry_from_index"].as_u64().unwrap() as usize;
        assert_eq!(expansion, serials[from - 1..]);

        // The delta MAC re-verifies from the stored interval key.
        let text = std::fs::read_to_string(a.join("delta_crl.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let key_hex = v["interval_key"].as_str().unwrap();
        let key = vcrl_core::crypto::Digest(
            hex::decode(key_hex).unwrap().try_into().unwrap(),
        );
        let interval = v["interval"].as_u64().unwrap() as u32;
        let (_, mac_key) = vcrl_core::crypto::derive_interval_keys(&key, interval);
        for piece_hex in v["pieces"].as_array().unwrap() {
            let bytes = hex::decode(piece_hex.as_str().unwrap()).unwrap();
            let piece = wire::decode_delta_piece(&bytes).unwrap();
            assert!(vcrl_core::crypto::mac_verify(
                &mac_key,
                &wire::delta_mac_payload(&piece),
                &piece.mac
            ));
        }
    }
}
