use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected} sites, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered at z = {z} ({detail})")]
    NonFinite { z: f64, detail: String },

    #[error("moment invariant violated: {0}")]
    InvariantViolation(String),

    #[error("non-physical covariance matrix: {0}")]
    NonPhysical(String),

    #[error("site index {index} out of range for a lattice of {sites} sites")]
    IndexOutOfRange { index: i64, sites: usize },

    #[error("self-pair ({0}, {0}) has no pairwise entanglement in the degenerate case")]
    SelfPair(i64),

    #[error("Bogoliubov propagator violates the symplectic conditions by {deviation:e}")]
    SymplecticViolation { deviation: f64 },

    #[error("Bessel order {0} outside the supported range 0..=64")]
    OrderOutOfRange(u32),
}

pub type Result<T> = std::result::Result<T, Error>;
