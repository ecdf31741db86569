use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    /// The observed pair at `row` (0-based) has zero weight under the bias.
    #[error("observation {row} lies outside the support of the bias function (w(x, y) = 0)")]
    InfeasibleSample { row: usize },

    #[error("bias function returned a negative weight {value} at ({x}, {y})")]
    NegativeWeight { x: f64, y: f64, value: f64 },

    #[error("exact oracle requested for n = {n}, above the cap of {cap}")]
    OracleTooLarge { n: usize, cap: usize },

    #[error("the weight matrix has zero permanent; the permutation law is undefined")]
    DegenerateLaw,

    #[error("empty input")]
    EmptyInput,

    #[error("need at least 2 uncensored observations, found {found}")]
    TooFewUncensored { found: usize },

    #[error("observation {row} violates x < y required by left truncation")]
    NonTruncatedInput { row: usize },

    #[error("censored samples cannot be permuted directly; reduce to the uncensored subsample first")]
    CensoredPermutation,

    #[error("every importance-sampling draw hit a dead end")]
    AllDrawsDead,

    #[error("all importance weights vanish")]
    ZeroTotalWeight,

    #[error("every quadrant center was removed by the low-expectation filter")]
    NoValidCenters,

    #[error("bias weight is zero at observation {index}; inverse weighting is undefined")]
    ZeroWeightAtPoint { index: usize },

    #[error("the weighted product measure has zero total mass")]
    ZeroNormalizer,

    #[error("conditional expectation of the weight vanishes at support point {index}")]
    ZeroConditionalExpectation { index: usize },

    #[error("marginal estimator not applicable: {0}")]
    EstimatorNotApplicable(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sampled weight {value} exceeds the declared bound {bound}")]
    BoundViolated { value: f64, bound: f64 },

    #[error("acceptance rate {rate:e} fell below 1e-6")]
    AcceptanceTooLow { rate: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
