//! Simulators for the secret transmission of spatial reference frames.
//!
//! Two distant parties that share no Cartesian frame can align their axes by
//! exchanging spin-1/2 particles. This crate implements desk-scale simulators
//! for four flavours of that task and for the eavesdropping attacks they are
//! designed to resist:
//!
//! - [`separable`]: spin-by-spin encoding of a secret direction keyed to a
//!   shared bit string, with a Stern-Gerlach receiver and a consistency alarm
//!   (plus a planar photon-polarization variant).
//! - [`optimal`]: the entangled block state over the angular-momentum
//!   decomposition of N spins, measured with a covariant rotation estimate,
//!   randomized by shift-and-multiply unitaries keyed to a short secret seed.
//! - [`bb84`]: prepare-and-measure frame alignment with multiplicity-space
//!   test states, sifting over a public channel, and disturbance detection.
//! - [`ekert`]: entanglement-based frame alignment with joint orientation
//!   measurements and a CHSH check on multiplicity entanglement.
//!
//! The group-theoretic substrate lives in [`su2`] (quaternions, Wigner
//! matrices, characters, Haar sampling) and [`blocks`] (the block Hilbert
//! space of N spins). [`schur`] holds a brute-force full-space oracle for
//! small N that certifies the block formalism. [`harness`] provides seeded
//! deterministic experiment drivers, scaling fits, and CSV/JSON emission.

pub mod bb84;
pub mod blocks;
pub mod ekert;
pub mod harness;
pub mod optimal;
pub mod quad;
pub mod schur;
pub mod separable;
pub mod su2;

use thiserror::Error;

/// Errors shared across the simulator modules.
#[derive(Debug, Error)]
pub enum Error {
    /// A state construction needs at least three spins.
    #[error("degenerate state: all raw block amplitudes vanish for N = {n_spins}")]
    DegenerateState { n_spins: usize },
    /// Angular momentum label outside the shape, or multiplicity too small.
    #[error("block j = {j2}/2 unavailable: {reason}")]
    BlockUnavailable { j2: u32, reason: &'static str },
    /// Shift-and-multiply exponents out of range.
    #[error("seed exponents (p, q) = ({p}, {q}) out of range for dimension {dim}")]
    SeedOutOfRange { p: u32, q: u32, dim: usize },
    /// A seed sequence does not cover exactly the support of a state.
    #[error("seed sequence does not match the block support of the state")]
    SeedMismatch,
    /// Two block objects live on different shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    /// Full-space constructions are capped at small spin counts.
    #[error("full-space oracle supports at most {max} spins (got {got})")]
    SizeLimit { max: usize, got: usize },
    /// Invalid run configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// I/O failure while emitting results.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
