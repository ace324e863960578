//! Error type shared by every stage of the pipeline.

use alloc::string::String;
use core::fmt;

/// Failure classes. Each carries a human-readable diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed Hamiltonian tree or inconsistent dimensions.
    Structural(String),
    /// An operation was called outside its admissible inputs.
    Precondition(String),
    /// The integrator or a root finder failed to converge.
    Numerical(String),
    /// Sampling too coarse to resolve a fold or crossing.
    Resolution(String),
    /// Non-transverse or otherwise degenerate geometry.
    Degenerate(String),
    /// Input outside the supported model (e.g. immersed curves).
    Unsupported(String),
    /// Non-generic configuration (equal-action ties, quadruple points).
    NonGeneric(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            Error::Structural(m) => ("structural error", m),
            Error::Precondition(m) => ("precondition violated", m),
            Error::Numerical(m) => ("numerical failure", m),
            Error::Resolution(m) => ("insufficient resolution", m),
            Error::Degenerate(m) => ("degenerate input", m),
            Error::Unsupported(m) => ("unsupported input", m),
            Error::NonGeneric(m) => ("non-generic input", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl core::error::Error for Error {}
