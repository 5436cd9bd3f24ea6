//! Absorbing-boundary evolution and detection statistics.
//!
//! The crate evolves wave functions under a Schrödinger (or one-dimensional
//! Dirac) Hamiltonian whose boundary condition absorbs probability, records
//! the boundary outflow as a detection-time/place distribution, builds the
//! discrete POVM of that distribution, and runs the multi-particle
//! detect-collapse-continue process.
//!
//! All norms, adjoints and fluxes are taken in the trapezoidal inner product
//! of the [`grid::Grid`]. The discretisation is chosen so that the semi-discrete
//! flux identity `Im<ψ, Hψ> = -(ħ/2) Σ_b outflow_b` holds exactly, which turns
//! contraction, flux balance and POVM completeness into machine-precision
//! checks.

pub mod bench;
pub mod detection;
pub mod dirac;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod propagator;
pub mod schrodinger;
pub mod units;
pub mod wave;

pub use error::{Error, Result};
pub use grid::{DomainKind, DomainSpec, FaceId, Grid, Side};
pub use propagator::{CnPropagator, StepFluxRecord};
pub use schrodinger::{BoundaryParams, OperatorMatrix, PotentialField};
pub use units::Units;
pub use wave::WaveFunction;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
