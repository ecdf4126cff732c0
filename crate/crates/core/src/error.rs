use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field mismatch: F_{left} vs F_{right}")]
    FieldMismatch { left: u64, right: u64 },

    #[error("division by zero in F_{0}")]
    DivisionByZero(u64),

    #[error("modulus {0} is not prime")]
    NonPrimeModulus(u64),

    #[error("index {index} out of range [1, {bound}]")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("evaluation points are not pairwise distinct: {0}")]
    DegenerateEvaluationPoints(String),

    #[error("matrix is singular over F_q")]
    SingularMatrix,

    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),

    #[error("field too small: q = {q} but L + N = {required}")]
    FieldTooSmall { q: u64, required: u64 },

    #[error("duplicate evaluation points: {0}")]
    DuplicatePoints(String),

    #[error("{0} is not a perfect square >= 4")]
    NotPerfectSquare(u64),

    #[error("enumeration needs {required} states, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("distribution is not normalized (total mass {0})")]
    UnnormalizedDistribution(f64),

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("config: {0}")]
    Config(String),

    #[error("malformed record: {0}")]
    Record(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
