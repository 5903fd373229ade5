use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("empty state space")]
    Empty,
    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("negative entry {value} at ({x}, {y})")]
    NegativeEntry { x: usize, y: usize, value: f64 },
    #[error("row {x} sums to {sum}, not 1")]
    RowSumViolation { x: usize, sum: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("kernel is not irreducible")]
    NotIrreducible,
    #[error("kernel is not reversible with respect to the given measure (residual {0:e})")]
    NotReversible(f64),
    #[error("measure is not positive at state {0}")]
    NonPositiveMeasure(usize),
    #[error("invalid probability vector: {0}")]
    InvalidMeasure(String),
    #[error("Jacobi eigensolver did not converge (off-diagonal norm {0:e})")]
    NoConvergence(f64),
    #[error("kernel is not uniplicit (minimal eigenvalue gap {0:e})")]
    NotUniplicit(f64),
    #[error("eigenvector {l} vanishes at state {x}")]
    VanishingEigenvectorAt { x: usize, l: usize },
    #[error("kernel is not birth-death")]
    NotBirthDeath,
    #[error("zero up-rate P(y, y+1) at y = {0}")]
    ZeroUpRate(usize),
    #[error("source row is not normalized: sum of row0 * mu = {0}")]
    SourceNotNormalized(f64),
    #[error("wave equation residual {0:e} exceeds tolerance")]
    WaveResidual(f64),
    #[error("source kernel is not invariant under the reflection x -> N - x")]
    SourceNotSymmetric,
    #[error("invalid base point ({0}, {1})")]
    InvalidBasePoint(usize, usize),
    #[error("index {index} out of range for {n} states")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("state count {n} exceeds the search limit {limit}")]
    SizeLimitExceeded { n: usize, limit: usize },
    #[error("map is not a permutation")]
    NotAPermutation,
    #[error("permutation {0:?} is not a symmetry of the kernel")]
    NotASymmetry(Vec<usize>),
    #[error("quotient kernel depends on the class representative (discrepancy {0:e})")]
    InconsistentQuotient(f64),
    #[error("projection is not surjective: class {0} has no preimage")]
    NotSurjective(usize),
    #[error("image measure vanishes at state {0}")]
    DegenerateImageMeasure(usize),
    #[error("link fails the lifting identity (residual {0:e})")]
    HypConditionViolated(f64),
    #[error("hypergroup routes disagree: triple sum {triple:e} vs commutator {commutator:e}")]
    InternalInconsistency { triple: f64, commutator: f64 },
    #[error("invalid link: {0}")]
    InvalidLink(String),
    #[error("unknown kernel variant `{0}`")]
    UnknownVariant(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("linear program too large: {0} states (limit 40)")]
    LpTooLarge(usize),
}
