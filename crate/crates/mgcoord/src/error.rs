//! Library-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of the supplied operands are mutually inconsistent.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A direct factorization detected rank deficiency.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// A constraint matrix lost row rank.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// Partition index outside the partitioning.
    #[error("unknown partition {0}")]
    UnknownPartition(usize),

    /// A constraint row cannot be attributed to a single partition.
    #[error("constraint row {row} is not separable: {detail}")]
    NonSeparableConstraint { row: usize, detail: String },

    /// The KKT matrix of one partition failed to factorize.
    #[error("partition {0} has a singular KKT system")]
    SingularPartition(usize),

    /// The stacked coordination dimension exceeds the dense-operator cap.
    #[error("dimension {dim} exceeds dense cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    /// Power iteration failed to settle on a spectral-radius estimate.
    #[error(
        "power iteration stalled: estimates spread {spread:.3e} after {iterations} iterations"
    )]
    PowerIterationStall { spread: f64, iterations: usize },

    /// The coupling graph is not 2-colorable with the requested structure.
    #[error("not two-colorable: {0}")]
    NotTwoColorable(String),

    /// A schedule constructor needs case metadata that was not provided.
    #[error("missing metadata: {0}")]
    MissingMetadata(String),

    /// Coarsening resolution does not divide the fine resolution.
    #[error("coarse resolution {coarse} does not divide {fine}")]
    NonDivisor { fine: usize, coarse: usize },

    /// The aggregated coarse constraints cannot absorb the coarse data term.
    #[error("coarse problem infeasible: aggregated constraints do not span the data term")]
    InfeasibleCoarse,

    /// Input validation failure that is not a pure shape problem.
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}
