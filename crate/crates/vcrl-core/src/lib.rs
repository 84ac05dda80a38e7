//! Protocol library for vehicle-centric certificate revocation list (CRL)
//! distribution in vehicular networks.
//!
//! The library covers both ends of the protocol:
//!
//! * issuer side ([`authority`]): hash-chained pseudonym batches, base-CRL
//!   assembly and piece splitting under a bandwidth budget, signed
//!   Bloom-filter fingerprints over piece digests, and delta-CRL construction
//!   authenticated by delayed key disclosure;
//! * receiver side ([`vehicle`]): fingerprint tracking, piece validation by
//!   Bloom membership, CRL parsing into per-interval revoked serials, delta
//!   buffering with MAC validation on key disclosure, and per-sender rate
//!   limiting against flooding.
//!
//! The crate is `no_std` (with `alloc`) so the receiver-side state machine can
//! run on OBU-class targets; simulation, IO, and file formats live in the
//! companion `vcrl-sim` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod authority;
pub mod bloom;
pub mod credentials;
pub mod crypto;
pub mod error;
pub mod params;
pub mod ratelimit;
pub mod vehicle;
pub mod wire;

pub use crate::error::Error;
pub use crate::params::ProtocolParams;
