use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("need at least 3 nodes per axis, got {0}")]
    TooFewNodes(usize),
    #[error("kappa = {kappa} < 0 on face {face} is emitting; the kappa<0 evolution is not known to be well posed (pass the emitting flag to override)")]
    EmittingBoundary { kappa: f64, face: String },
    #[error("potential is not finite at node {0}")]
    NonFinitePotential(usize),
    #[error("potential is not Hermitian at node {0}")]
    NonHermitianPotential(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dimension {dim} exceeds the dense limit {limit}")]
    TooLarge { dim: usize, limit: usize },
    #[error("linear solve failed: zero pivot at column {0}")]
    SingularSystem(usize),
    #[error("initial state must be normalized, got ||psi||^2 = {0}")]
    Unnormalized(f64),
    #[error("collapse onto null slice")]
    NullSlice,
    #[error("probe list is empty")]
    EmptyProbes,
    #[error("probe {0} is the zero vector")]
    ZeroProbe(usize),
    #[error("eigensolver failed: {0}")]
    Eigensolver(String),
    #[error("boundary normal must be a unit vector, |u| = {0}")]
    NonUnitNormal(f64),
    #[error("unsupported spin dimension {0} (expected 2 or 4)")]
    UnsupportedSpinDim(usize),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Size and feasibility guards, as opposed to bad input or broken invariants.
    pub fn is_guard(&self) -> bool {
        matches!(self, Error::TooLarge { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
