//! Detection statistics built on the boundary flux of an absorbing evolution.
//!
//! Outcomes are binned per (time step, boundary entry); a boundary entry is a
//! (node, face) pair, so a corner node of a box or product grid contributes one
//! cell per face it lies on. The reported time is the step midpoint.

mod cascade;
mod collapse;
mod distribution;
mod joint;
mod povm;
mod sampling;
mod spectrum;

pub use cascade::{cascade_batch, cascade_run, CascadeResult, CascadeSetup};
pub use collapse::{collapse, collapse_superoperator_choi, collapse_with_norm, CollapseMap};
pub use distribution::{record_distribution, steps_for_horizon, DetectionDistribution, DistributionRow, DistributionSummary};
pub use joint::{joint_distribution_2particle, FirstKey, JointRow, JointTable};
pub use povm::{assemble_j, DiscretePovm};
pub use sampling::{sample_detection, DetectionEvent, Outcome};
pub use spectrum::{eigenmode, spectrum_report, SpectrumReport};
