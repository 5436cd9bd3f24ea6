//! Sparse, banded and dense complex linear algebra used by the solvers.

pub mod banded;
pub mod dense;
pub mod sparse;

pub use banded::BandedLu;
pub use sparse::{CsrMatrix, Triplets};
