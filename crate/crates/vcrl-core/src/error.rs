//! Error type shared across the protocol library.

use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A caller-supplied parameter is out of range.
    Param(&'static str),
    /// An operation conflicts with recorded state (ledger transitions,
    /// mismatched interval keys).
    State(&'static str),
    /// A key was requested before its disclosure time.
    EarlyDisclosure { interval: u32 },
    /// Wire bytes do not decode to the expected structure.
    Decode(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Param(msg) => write!(f, "invalid parameter: {msg}"),
            Error::State(msg) => write!(f, "state error: {msg}"),
            Error::EarlyDisclosure { interval } => {
                write!(f, "key for interval {interval} requested before its disclosure time")
            }
            Error::Decode(msg) => write!(f, "malformed encoding: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
