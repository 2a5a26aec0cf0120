use thiserror::Error;

/// Library-wide error type. Variants carry enough context to name the offending
/// entry, index, or bound in user-facing messages.
#[derive(Debug, Error)]
pub enum Error {
    /// Input matrix is not a generator: negative off-diagonal or row sum off zero.
    #[error("not a generator: {0}")]
    NonGenerator(String),

    /// A fluid rate is (numerically) zero; such phases are rejected, not censored.
    #[error("zero fluid rate at phase {index} ({label})")]
    ZeroRate { index: usize, label: String },

    /// All rates share one sign, so there is no first-return problem to solve.
    #[error("every phase drifts the same way: {0}")]
    EmptySide(String),

    /// Mismatched dimensions between inputs.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The directed graph of nonzero off-diagonals is not strongly connected.
    #[error("reducible matrix: {0}")]
    Reducible(String),

    /// A linear system lost all its pivots.
    #[error("singular linear system: {0}")]
    Singular(String),

    /// An eigenvalue iteration hit its cap without stabilising.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A diagonal entry of the generator is zero, so the optimal doubling
    /// parameters are undefined.
    #[error("zero diagonal entry at phase {0}; optimal doubling parameters undefined")]
    DegenerateDiagonal(usize),

    /// The doubling initialization matrix is singular.
    #[error("singular doubling initialization: {0}")]
    SingularQ(String),

    /// Doubling parameters outside the admissible box.
    #[error("bad parameters: {0}")]
    BadParams(String),

    /// An (I - GH)-style cascade matrix became singular mid-iteration.
    #[error("singular cascade at iteration {iteration}: {detail}")]
    SingularCascade { iteration: usize, detail: String },

    /// An iterative solver exhausted its iteration budget.
    #[error("iteration cap {cap} exceeded ({context})")]
    MaxIterExceeded { cap: usize, context: String },

    /// Operation requires a unit-rate model (all rates exactly ±1).
    #[error("model must have unit rates: {0}")]
    NonUnitRates(String),

    /// A candidate probability matrix has entries outside [0, 1].
    #[error("bad probability matrix: {0}")]
    BadPsi(String),

    /// Eigenvalue signs and mean drift tell different stories.
    #[error("inconsistent classification evidence: {0}")]
    Inconsistent(String),

    /// The requested QBD embeds matrices derived from psi, which was not given.
    #[error("QBD kind {0} needs a psi matrix")]
    NeedPsi(&'static str),

    /// A uniformization rate is too small for a nonnegative construction.
    #[error("uniformization rate too small: {0}")]
    RateTooSmall(String),

    /// Model file could not be read or parsed.
    #[error("cannot read model: {0}")]
    ModelFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;
