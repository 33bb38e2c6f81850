//! Averaged second-moment dynamics of squeezed light in a one-dimensional
//! array of quadratically nonlinear waveguides with a single pumped guide.
//!
//! The crate is organised around the closed linear moment systems that
//! follow from the Heisenberg equations of the signal field:
//!
//! * [`moments`] holds the degenerate and non-degenerate moment states and
//!   integrates them along the propagation distance with classical RK4.
//! * [`entanglement`] turns moment states into two-mode covariance matrices
//!   and logarithmic negativity maps, stationary values and survival
//!   distances under pump phase noise.
//! * [`reduced`] and [`bessel`] implement the single-guide reduction with a
//!   Bessel memory kernel and its identity checks against the lattice.
//! * [`oracle`] is an independent Monte-Carlo route: Wiener phase paths,
//!   per-realization Bogoliubov propagators and ensemble-averaged moments.
//!
//! Lengths are measured in units of `1/C_s` by convention (`c_s = 1`), so
//! `g` and `gamma` are the dimensionless ratios `g/C_s` and `gamma/C_s`.

pub mod bessel;
pub mod entanglement;
pub mod error;
pub mod growth;
pub mod lattice;
pub mod moments;
pub mod oracle;
pub mod params;
pub mod reduced;
pub mod symplectic;

pub use error::{Error, Result};
pub use lattice::SiteMatrix;
pub use moments::{DegenerateMoments, Evolver, GeneralMoments, MomentState};
pub use params::{Case, SimParams};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
