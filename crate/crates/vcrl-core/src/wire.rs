//! Canonical wire encodings.
//!
//! Fixed field order, big-endian integers, Bloom bit arrays packed MSB-first,
//! variable fields length-prefixed. The full layouts are documented in
//! `docs/wire.md`; golden-file tests pin them. Piece digests (the values
//! inserted in fingerprints) are plain SHA-256 over the complete encoded
//! piece, so both ends must produce identical bytes.

use alloc::vec::Vec;

use crate::authority::{CrlPiece, DeltaCrlPiece};
use crate::bloom::{BloomFilter, Fingerprint};
use crate::credentials::{Pseudonym, RevocationEntry};
use crate::crypto::{sha256, Digest, SchemeId, Signature, VerifyingKey, DIGEST_LEN};
use crate::error::Error;
use crate::vehicle::PieceRequest;

pub const KIND_CRL_PIECE: u8 = 0x01;
pub const KIND_DELTA_PIECE: u8 = 0x02;
pub const KIND_FINGERPRINT: u8 = 0x03;
pub const KIND_PSEUDONYM: u8 = 0x04;
pub const KIND_PIECE_REQUEST: u8 = 0x05;
pub const KIND_KEY_DISCLOSURE: u8 = 0x06;

/// Encoded size of one revocation entry.
pub const ENTRY_WIRE_LEN: usize = 72;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Decode("truncated message"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, Error> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, Error> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, Error> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn digest(&mut self) -> Result<Digest, Error> {
        Ok(Digest(self.take(DIGEST_LEN)?.try_into().expect("32 bytes")))
    }

    fn finish(&self) -> Result<(), Error> {
        if self.pos != self.buf.len() {
            return Err(Error::Decode("trailing bytes"));
        }
        Ok(())
    }
}

fn put_signature(out: &mut Vec<u8>, sig: &Signature) {
    out.push(sig.scheme.wire_id());
    out.extend_from_slice(&(sig.bytes.len() as u16).to_be_bytes());
    out.extend_from_slice(&sig.bytes);
}

fn read_signature(r: &mut Reader<'_>) -> Result<Signature, Error> {
    let scheme =
        SchemeId::from_wire_id(r.u8()?).ok_or(Error::Decode("unknown signature scheme"))?;
    let len = r.u16()? as usize;
    Ok(Signature { scheme, bytes: r.take(len)?.to_vec() })
}

/// Signature wire size for a given scheme (used for piece budget math).
pub fn signature_wire_len(scheme: SchemeId) -> usize {
    match scheme {
        SchemeId::EcdsaP256 => 3 + 64,
        SchemeId::Mock => 3 + 16,
    }
}

// ---- revocation entries ----

pub fn encode_entry(out: &mut Vec<u8>, e: &RevocationEntry) {
    out.extend_from_slice(&e.first_revoked_serial.0);
    out.extend_from_slice(&e.chain_value.0);
    out.extend_from_slice(&e.remaining.to_be_bytes());
    out.extend_from_slice(&e.first_interval.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes()); // reserved
}

fn read_entry(r: &mut Reader<'_>) -> Result<RevocationEntry, Error> {
    let first_revoked_serial = r.digest()?;
    let chain_value = r.digest()?;
    let remaining = r.u16()?;
    let first_interval = r.u32()?;
    if r.u16()? != 0 {
        return Err(Error::Decode("nonzero reserved bytes in entry"));
    }
    Ok(RevocationEntry { first_revoked_serial, chain_value, remaining, first_interval })
}

// ---- base CRL pieces ----

pub fn encode_crl_piece(p: &CrlPiece) -> Vec<u8> {
    let mut out = Vec::with_capacity(128 + p.entries.len() * ENTRY_WIRE_LEN);
    out.push(KIND_CRL_PIECE);
    out.extend_from_slice(&p.gamma_crl_index.to_be_bytes());
    out.extend_from_slice(&p.crl_version.to_be_bytes());
    out.extend_from_slice(&p.piece_index.to_be_bytes());
    out.extend_from_slice(&p.total_pieces.to_be_bytes());
    out.extend_from_slice(&p.tesla_anchor.0);
    put_signature(&mut out, &p.anchor_signature);
    out.extend_from_slice(&(p.entries.len() as u16).to_be_bytes());
    for e in &p.entries {
        encode_entry(&mut out, e);
    }
    out
}

pub fn decode_crl_piece(buf: &[u8]) -> Result<CrlPiece, Error> {
    let mut r = Reader::new(buf);
    if r.u8()? != KIND_CRL_PIECE {
        return Err(Error::Decode("not a CRL piece"));
    }
    let gamma_crl_index = r.u32()?;
    let crl_version = r.u32()?;
    let piece_index = r.u16()?;
    let total_pieces = r.u16()?;
    if piece_index >= total_pieces {
        return Err(Error::Decode("piece index out of range"));
    }
    let tesla_anchor = r.digest()?;
    let anchor_signature = read_signature(&mut r)?;
    let count = r.u16()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        entries.push(read_entry(&mut r)?);
    }
    r.finish()?;
    Ok(CrlPiece {
        gamma_crl_index,
        crl_version,
        piece_index,
        total_pieces,
        entries,
        tesla_anchor,
        anchor_signature,
    })
}

/// SHA-256 of the full encoded piece; this is what fingerprints hold.
pub fn piece_digest(encoded: &[u8]) -> Digest {
    sha256(encoded)
}

/// Encoded size of a base piece holding `entry_count` entries.
pub fn crl_piece_wire_len(entry_count: usize, sig_scheme: SchemeId) -> usize {
    1 + 4 + 4 + 2 + 2 + DIGEST_LEN + signature_wire_len(sig_scheme) + 2
        + entry_count * ENTRY_WIRE_LEN
}

// ---- delta CRL pieces ----

/// MAC-covered prefix of a delta piece: header and serials, not the
/// disclosed key (that field authenticates itself against the anchor).
pub fn delta_mac_payload(p: &DeltaCrlPiece) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + p.serials.len() * DIGEST_LEN);
    out.push(KIND_DELTA_PIECE);
    out.extend_from_slice(&p.gamma_crl_index.to_be_bytes());
    out.extend_from_slice(&(p.interval_index as u16).to_be_bytes());
    out.extend_from_slice(&p.piece_index.to_be_bytes());
    out.extend_from_slice(&p.total_pieces.to_be_bytes());
    out.extend_from_slice(&(p.serials.len() as u16).to_be_bytes());
    for s in &p.serials {
        out.extend_from_slice(&s.0);
    }
    out
}

pub fn encode_delta_piece(p: &DeltaCrlPiece) -> Vec<u8> {
    let mut out = delta_mac_payload(p);
    out.extend_from_slice(&p.disclosed_prev_key.0);
    out.extend_from_slice(&p.mac.0);
    out
}

pub fn decode_delta_piece(buf: &[u8]) -> Result<DeltaCrlPiece, Error> {
    let mut r = Reader::new(buf);
    if r.u8()? != KIND_DELTA_PIECE {
        return Err(Error::Decode("not a delta piece"));
    }
    let gamma_crl_index = r.u32()?;
    let interval_index = r.u16()? as u32;
    let piece_index = r.u16()?;
    let total_pieces = r.u16()?;
    if piece_index >= total_pieces {
        return Err(Error::Decode("piece index out of range"));
    }
    let count = r.u16()? as usize;
    let mut serials = Vec::with_capacity(count);
    for _ in 0..count {
        serials.push(r.digest()?);
    }
    let disclosed_prev_key = r.digest()?;
    let mac = r.digest()?;
    r.finish()?;
    Ok(DeltaCrlPiece {
        gamma_crl_index,
        interval_index,
        piece_index,
        total_pieces,
        serials,
        disclosed_prev_key,
        mac,
    })
}

pub fn delta_piece_wire_len(serial_count: usize) -> usize {
    1 + 4 + 2 + 2 + 2 + 2 + serial_count * DIGEST_LEN + DIGEST_LEN + DIGEST_LEN
}

// ---- fingerprints ----

pub fn encode_fingerprint(fp: &Fingerprint) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + fp.filter.bit_bytes().len());
    out.push(KIND_FINGERPRINT);
    out.extend_from_slice(&fp.signed_payload());
    put_signature(&mut out, &fp.signature);
    out
}

pub fn decode_fingerprint(buf: &[u8]) -> Result<Fingerprint, Error> {
    let mut r = Reader::new(buf);
    if r.u8()? != KIND_FINGERPRINT {
        return Err(Error::Decode("not a fingerprint"));
    }
    let gamma_crl_index = r.u32()?;
    let crl_version = r.u32()?;
    let piece_count = r.u32()?;
    let m = r.u32()?;
    let k = r.u16()? as u32;
    if m == 0 {
        return Err(Error::Decode("fingerprint filter m == 0"));
    }
    let bits = r.take(m.div_ceil(8) as usize)?.to_vec();
    let signature = read_signature(&mut r)?;
    r.finish()?;
    let filter = BloomFilter::from_parts(m, k, bits, piece_count)
        .map_err(|_| Error::Decode("fingerprint filter parts inconsistent"))?;
    Ok(Fingerprint { gamma_crl_index, crl_version, piece_count, filter, signature })
}

// ---- pseudonyms ----

/// Bytes covered by the issuer signature: everything up to the signature,
/// including the embedded carrier fingerprint when present.
pub fn pseudonym_signed_payload(p: &Pseudonym) -> Vec<u8> {
    let mut out = Vec::with_capacity(96);
    out.push(KIND_PSEUDONYM);
    out.extend_from_slice(&p.serial.0);
    out.extend_from_slice(&p.valid_from.to_be_bytes());
    out.extend_from_slice(&p.valid_to.to_be_bytes());
    out.extend_from_slice(&p.index_in_batch.to_be_bytes());
    let pk = p.public_key.to_bytes();
    out.extend_from_slice(&(pk.len() as u16).to_be_bytes());
    out.extend_from_slice(&pk);
    match &p.carrier_payload {
        Some(fp) => {
            out.push(1);
            let enc = encode_fingerprint(fp);
            out.extend_from_slice(&(enc.len() as u32).to_be_bytes());
            out.extend_from_slice(&enc);
        }
        None => out.push(0),
    }
    out
}

pub fn encode_pseudonym(p: &Pseudonym) -> Vec<u8> {
    let mut out = pseudonym_signed_payload(p);
    put_signature(&mut out, &p.issuer_signature);
    out
}

pub fn decode_pseudonym(buf: &[u8]) -> Result<Pseudonym, Error> {
    let mut r = Reader::new(buf);
    let p = read_pseudonym(&mut r)?;
    r.finish()?;
    Ok(p)
}

fn read_pseudonym(r: &mut Reader<'_>) -> Result<Pseudonym, Error> {
    if r.u8()? != KIND_PSEUDONYM {
        return Err(Error::Decode("not a pseudonym"));
    }
    let serial = r.digest()?;
    let valid_from = r.u64()?;
    let valid_to = r.u64()?;
    if valid_to <= valid_from {
        return Err(Error::Decode("empty validity window"));
    }
    let index_in_batch = r.u16()?;
    let pk_len = r.u16()? as usize;
    let public_key = VerifyingKey::from_bytes(r.take(pk_len)?)
        .ok_or(Error::Decode("bad pseudonym public key"))?;
    let carrier_payload = match r.u8()? {
        0 => None,
        1 => {
            let len = r.u32()? as usize;
            Some(decode_fingerprint(r.take(len)?)?)
        }
        _ => return Err(Error::Decode("bad carrier flag")),
    };
    let issuer_signature = read_signature(r)?;
    Ok(Pseudonym {
        serial,
        valid_from,
        valid_to,
        index_in_batch,
        public_key,
        carrier_payload,
        issuer_signature,
    })
}

// ---- piece requests ----

pub fn piece_request_signed_payload(req: &PieceRequest) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + req.missing.len() * 2);
    out.push(KIND_PIECE_REQUEST);
    out.extend_from_slice(&req.gamma_crl_index.to_be_bytes());
    out.extend_from_slice(&req.crl_version.to_be_bytes());
    out.extend_from_slice(&(req.missing.len() as u16).to_be_bytes());
    for idx in &req.missing {
        out.extend_from_slice(&idx.to_be_bytes());
    }
    let psn = encode_pseudonym(&req.requester);
    out.extend_from_slice(&(psn.len() as u32).to_be_bytes());
    out.extend_from_slice(&psn);
    out
}

pub fn encode_piece_request(req: &PieceRequest) -> Vec<u8> {
    let mut out = piece_request_signed_payload(req);
    put_signature(&mut out, &req.signature);
    out
}

pub fn decode_piece_request(buf: &[u8]) -> Result<PieceRequest, Error> {
    let mut r = Reader::new(buf);
    if r.u8()? != KIND_PIECE_REQUEST {
        return Err(Error::Decode("not a piece request"));
    }
    let gamma_crl_index = r.u32()?;
    let crl_version = r.u32()?;
    let count = r.u16()? as usize;
    let mut missing = Vec::with_capacity(count);
    for _ in 0..count {
        missing.push(r.u16()?);
    }
    let psn_len = r.u32()? as usize;
    let requester = decode_pseudonym(r.take(psn_len)?)?;
    let signature = read_signature(&mut r)?;
    r.finish()?;
    Ok(PieceRequest { gamma_crl_index, crl_version, missing, requester, signature })
}

// ---- key disclosures ----

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyDisclosure {
    pub gamma_crl_index: u32,
    /// Local 1-based interval the key belongs to.
    pub interval_index: u32,
    pub key: Digest,
}

pub fn encode_key_disclosure(kd: &KeyDisclosure) -> Vec<u8> {
    let mut out = Vec::with_capacity(39);
    out.push(KIND_KEY_DISCLOSURE);
    out.extend_from_slice(&kd.gamma_crl_index.to_be_bytes());
    out.extend_from_slice(&(kd.interval_index as u16).to_be_bytes());
    out.extend_from_slice(&kd.key.0);
    out
}

pub fn decode_key_disclosure(buf: &[u8]) -> Result<KeyDisclosure, Error> {
    let mut r = Reader::new(buf);
    if r.u8()? != KIND_KEY_DISCLOSURE {
        return Err(Error::Decode("not a key disclosure"));
    }
    let gamma_crl_index = r.u32()?;
    let interval_index = r.u16()? as u32;
    let key = r.digest()?;
    r.finish()?;
    Ok(KeyDisclosure { gamma_crl_index, interval_index, key })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn entry_is_exactly_72_bytes() {
        let e = RevocationEntry {
            first_revoked_serial: Digest([1; 32]),
            chain_value: Digest([2; 32]),
            remaining: 5,
            first_interval: 61,
        };
        let mut buf = Vec::new();
        encode_entry(&mut buf, &e);
        assert_eq!(buf.len(), ENTRY_WIRE_LEN);
        let mut r = Reader::new(&buf);
        assert_eq!(read_entry(&mut r).unwrap(), e);
        r.finish().unwrap();
    }

    #[test]
    fn truncated_and_trailing_bytes_are_rejected() {
        let kd = KeyDisclosure { gamma_crl_index: 1, interval_index: 2, key: Digest([3; 32]) };
        let enc = encode_key_disclosure(&kd);
        assert_eq!(decode_key_disclosure(&enc).unwrap(), kd);
        assert!(decode_key_disclosure(&enc[..enc.len() - 1]).is_err());
        let mut longer = enc.clone();
        longer.push(0);
        assert!(decode_key_disclosure(&longer).is_err());
        assert!(decode_crl_piece(&enc).is_err());
    }

    #[test]
    fn wire_len_helpers_match_encodings() {
        let piece = CrlPiece {
            gamma_crl_index: 7,
            crl_version: 1,
            piece_index: 0,
            total_pieces: 1,
            entries: vec![
                RevocationEntry {
                    first_revoked_serial: Digest([1; 32]),
                    chain_value: Digest([2; 32]),
                    remaining: 0,
                    first_interval: 420,
                };
                3
            ],
            tesla_anchor: Digest([9; 32]),
            anchor_signature: Signature { scheme: SchemeId::Mock, bytes: vec![0; 16] },
        };
        assert_eq!(
            encode_crl_piece(&piece).len(),
            crl_piece_wire_len(3, SchemeId::Mock)
        );

        let delta = DeltaCrlPiece {
            gamma_crl_index: 7,
            interval_index: 3,
            piece_index: 0,
            total_pieces: 1,
            serials: vec![Digest([4; 32]); 5],
            disclosed_prev_key: Digest([5; 32]),
            mac: Digest([6; 32]),
        };
        let enc = encode_delta_piece(&delta);
        assert_eq!(enc.len(), delta_piece_wire_len(5));
        // MAC payload is the prefix before the disclosed key and tag.
        assert_eq!(&enc[..enc.len() - 64], &delta_mac_payload(&delta)[..]);
        assert_eq!(decode_delta_piece(&enc).unwrap(), delta);
    }
}
