//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building states, measurements, and
/// bounds. Diagnostic quantities (residuals, required sizes) ride along so
/// callers can report actionable messages.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A matrix that must be Hermitian is not, beyond the relative tolerance.
    #[error("matrix is not Hermitian: deviation {deviation:.3e} exceeds {tol:.3e} (relative)")]
    NotHermitian { deviation: f64, tol: f64 },

    /// An iterative kernel (eigensolver, exponential series) failed to
    /// converge.
    #[error("numerical kernel failed to converge: {context}")]
    NoConvergence { context: String },

    /// Matrix/vector shapes are inconsistent for the requested operation.
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    /// The requested Fock-space truncation cannot represent the object to the
    /// required tail mass.
    #[error(
        "truncation insufficient: tail mass {tail:.3e} exceeds {tol:.3e}; \
         need dimension >= {required_dim}"
    )]
    TruncationInsufficient {
        tail: f64,
        tol: f64,
        required_dim: usize,
    },

    /// A generator that must be Hermitian (real canonical or unitary shift
    /// family) is not.
    #[error("generator {index} is not Hermitian (deviation {deviation:.3e})")]
    NonHermitianGenerator { index: usize, deviation: f64 },

    /// The normalization chi of a canonical family is non-finite or
    /// non-positive at the requested point.
    #[error("normalization chi diverged or vanished at the requested point (chi = {chi:.6e})")]
    DivergentChi { chi: f64 },

    /// Family evaluation left the representable domain (non-finite entries).
    #[error("parameter point outside the representable domain: {context}")]
    OutOfDomain { context: String },

    /// A finite-difference derivative produced non-finite values or failed
    /// its internal consistency check.
    #[error("derivative evaluation failed: {context}")]
    DerivativeFailure { context: String },

    /// Eigenvalue gaps collapse below the floor so the commutator equation
    /// has no stable solution in the affected block.
    #[error("degenerate spectrum: eigenvalue gap {gap:.3e} below floor {floor:.3e}")]
    DegenerateSpectrum { gap: f64, floor: f64 },

    /// An operation was asked of a family of the wrong parameter kind.
    #[error("parameter-kind mismatch: {context}")]
    KindMismatch { context: String },

    /// A quantity that must live on the support of the state has components
    /// outside it.
    #[error("support mismatch: off-support mass {mass:.3e} exceeds {tol:.3e}")]
    SupportMismatch { mass: f64, tol: f64 },

    /// An information matrix is singular and no subspace fallback was
    /// requested.
    #[error("information matrix singular (rank {rank} of {dim}): {context}")]
    SingularInformation {
        rank: usize,
        dim: usize,
        context: String,
    },

    /// The estimator fails the unbiasedness precondition.
    #[error("estimator biased: deviation {bias:.3e} exceeds {tol:.3e}")]
    BiasedEstimator { bias: f64, tol: f64 },

    /// Operators that must commute do not.
    #[error("operators do not commute: commutator norm {norm:.3e} exceeds {tol:.3e}")]
    NotCommuting { norm: f64, tol: f64 },

    /// Too few phase bins for exact discrete orthogonality at this dimension.
    #[error("too few phase bins: {bins} < {required} required for dimension {dim}")]
    BinsTooFew {
        bins: usize,
        required: usize,
        dim: usize,
    },

    /// The POVM fails validation (negative effects, broken completeness).
    #[error("invalid POVM: {context}")]
    InvalidPovm { context: String },

    /// The matrix function z/(e^z - 1) was evaluated at a non-removable pole
    /// (eigenvalue of i theta.C at a nonzero multiple of 2 pi i).
    #[error("K-matrix at a non-removable pole: eigenvalue {eigenvalue:.6} near 2*pi*{multiple}")]
    SingularityAtPole { eigenvalue: f64, multiple: i64 },

    /// The error matrix is singular where it must be inverted.
    #[error("error matrix singular: {context}")]
    SingularR { context: String },

    /// Scenario-level configuration is invalid.
    #[error("invalid configuration: {context}")]
    ConfigInvalid { context: String },

    /// Dimension below the minimum the operation supports.
    #[error("dimension {dim} too small: need at least {min}")]
    DimensionTooSmall { dim: usize, min: usize },
}
