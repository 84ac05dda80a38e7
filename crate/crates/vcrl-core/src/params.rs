//! Protocol timing parameters and the τ_P interval grid.
//!
//! All protocol times are `u64` microseconds from a common epoch. An
//! *interval* is one pseudonym lifetime slot; intervals are indexed
//! absolutely (`t / τ_P`) and, inside one `Γ_CRL`, locally from 1 to `N`.

use crate::error::Error;

pub const MICROS_PER_SEC: u64 = 1_000_000;

pub fn secs(s: u64) -> u64 {
    s * MICROS_PER_SEC
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtocolParams {
    /// Pseudonym lifetime τ_P, microseconds.
    pub tau_p: u64,
    /// Pseudonym-batch interval Γ, microseconds. Divisible by τ_P.
    pub gamma: u64,
    /// CRL release interval Γ_CRL, microseconds. Divisible by τ_P.
    pub gamma_crl: u64,
}

impl ProtocolParams {
    pub fn new(tau_p: u64, gamma: u64, gamma_crl: u64) -> Result<Self, Error> {
        if tau_p == 0 {
            return Err(Error::Param("tau_p must be positive"));
        }
        if gamma == 0 || gamma % tau_p != 0 {
            return Err(Error::Param("gamma must be a positive multiple of tau_p"));
        }
        if gamma_crl == 0 || gamma_crl % tau_p != 0 {
            return Err(Error::Param("gamma_crl must be a positive multiple of tau_p"));
        }
        Ok(ProtocolParams { tau_p, gamma, gamma_crl })
    }

    /// Pseudonyms per batch, D = Γ/τ_P.
    pub fn batch_size(&self) -> u16 {
        (self.gamma / self.tau_p) as u16
    }

    /// Intervals per Γ_CRL, N = Γ_CRL/τ_P.
    pub fn intervals_per_gamma_crl(&self) -> u32 {
        (self.gamma_crl / self.tau_p) as u32
    }

    /// Absolute τ_P interval index containing `t`.
    pub fn interval_of(&self, t: u64) -> u32 {
        (t / self.tau_p) as u32
    }

    pub fn interval_start(&self, interval: u32) -> u64 {
        interval as u64 * self.tau_p
    }

    pub fn gamma_crl_of(&self, t: u64) -> u32 {
        (t / self.gamma_crl) as u32
    }

    pub fn gamma_crl_start(&self, gamma_crl_index: u32) -> u64 {
        gamma_crl_index as u64 * self.gamma_crl
    }

    pub fn gamma_start(&self, gamma_index: u32) -> u64 {
        gamma_index as u64 * self.gamma
    }

    /// Absolute interval index of local interval `i` (1-based) in a Γ_CRL.
    pub fn absolute_interval(&self, gamma_crl_index: u32, local: u32) -> u32 {
        self.interval_of(self.gamma_crl_start(gamma_crl_index)) + local - 1
    }

    /// Local 1-based interval index within a Γ_CRL, if the absolute interval
    /// falls inside it.
    pub fn local_interval(&self, gamma_crl_index: u32, absolute: u32) -> Option<u32> {
        let first = self.interval_of(self.gamma_crl_start(gamma_crl_index));
        let n = self.intervals_per_gamma_crl();
        if absolute >= first && absolute < first + n {
            Some(absolute - first + 1)
        } else {
            None
        }
    }

    /// Earliest time the interval-`i` commitment key may be disclosed.
    pub fn disclosure_time(&self, gamma_crl_index: u32, local: u32, mode: DisclosureMode) -> u64 {
        let interval_start =
            self.gamma_crl_start(gamma_crl_index) + (local as u64 - 1) * self.tau_p;
        match mode {
            DisclosureMode::Strict => interval_start,
            // Keys go out from the middle of the preceding interval so that
            // receivers hold them by the interval boundary.
            DisclosureMode::Optimized => interval_start.saturating_sub(self.tau_p / 2),
        }
    }
}

/// When the issuer releases interval keys relative to the interval start.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DisclosureMode {
    /// At the interval start (the pseudonym transition).
    Strict,
    /// From the midpoint of the preceding interval.
    Optimized,
}
