use alloc::string::String;

use thiserror::Error;

use crate::harris::StreamId;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("site {site} is outside the window 1..={len}")]
    SiteOutOfWindow { site: usize, len: usize },
    #[error("transition index {index} out of range ({count} transitions)")]
    TransitionOutOfRange { index: usize, count: usize },
    #[error("invalid rate {0}: clock rates must be positive and finite")]
    InvalidRate(f64),
    #[error("invalid horizon {0}: must be positive and finite")]
    InvalidHorizon(f64),
    #[error("particle at site {site} would leave the fixed window of {len} sites at t={time}")]
    WindowOverflow { site: usize, len: usize, time: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("lattice of {len} sites exceeds the exact solver limit of {max}")]
    StateSpaceTooLarge { len: usize, max: usize },
    #[error(
        "chain is reducible: {reachable} states reachable from empty, {transient} of them cannot return"
    )]
    Reducible { reachable: usize, transient: usize },
    #[error("linear solve failed: {0}")]
    Singular(String),
    #[error("flux balance violated: entry {entry} vs exit {exit}")]
    FluxImbalance { entry: f64, exit: f64 },
    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("stream {0:?} is not part of this layout")]
    UnknownStream(StreamId),
}
