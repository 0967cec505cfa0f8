use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid counts: {false_rejections} false rejections out of {rejections} rejections")]
    InvalidCounts {
        false_rejections: usize,
        rejections: usize,
    },

    #[error("p-value {value} at family {family}, hypothesis {hypothesis} is outside [0, 1]")]
    PValueOutOfRange {
        family: usize,
        hypothesis: usize,
        value: f64,
    },

    #[error("family {0} has no hypotheses")]
    EmptyFamily(usize),

    #[error("an ensemble needs at least one family")]
    NoFamilies,

    #[error("truth mask for family {family} has {got} flags, expected {expected}")]
    TruthMismatch {
        family: usize,
        expected: usize,
        got: usize,
    },

    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("level {0} is outside the allowed range")]
    InvalidLevel(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("critical values must be nondecreasing and lie in [0, 1]")]
    InvalidCriticalValues,

    #[error("family {0} is not selected")]
    NotSelected(usize),

    #[error("unsupported selection rule: {0}")]
    UnsupportedRule(String),

    #[error("selection rule is not concordant: {0}")]
    NonConcordant(String),

    #[error("iterative adjustment did not converge after {} iterations", trajectory.len())]
    NonConvergence { trajectory: Vec<Vec<usize>> },

    #[error("internal invariant violated: {0}")]
    InvariantViolation(String),
}
