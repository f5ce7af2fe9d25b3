use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
///
/// Every variant maps to a stable string code (see [`EssRegError::code`]) so
/// scripted callers can branch on failures without parsing messages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EssRegError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no variable was declared pure (delta too small or too large, or the model is violated)")]
    EmptyPartition,

    #[error("merge produced an empty group")]
    InvariantViolation,

    #[error("every delta on the grid failed to produce a usable partition")]
    AllGridFailed,

    #[error("group {0} has fewer than two members")]
    GroupTooSmall(usize),

    #[error("covariance between in-group variables {0} and {1} is exactly zero; sign undefined")]
    ZeroCovariance(usize, usize),

    #[error("Theta'Theta is numerically singular even after ridge t = {0}")]
    SingularAfterRidge(f64),

    #[error("estimated factor covariance is singular")]
    SingularSigmaZ,

    #[error("B'(Sigma - Gamma)B is singular")]
    SingularInner,

    #[error("Gram matrix is singular")]
    SingularGram,

    #[error("Theta' Sigma Theta is singular")]
    SingularMiddle,

    #[error("Dantzig program for row {0} is infeasible")]
    LpInfeasible(usize),

    #[error("Dantzig program for row {0} is unbounded")]
    LpUnbounded(usize),

    #[error("inputs are heterogeneous ({0}); use the general variance formula")]
    HeterogeneousInputs(String),

    #[error("variance must be positive, got {0}")]
    NonpositiveVariance(f64),

    #[error("estimated and true partitions share no variable")]
    NoOverlap,

    #[error("formula {0} cannot be used with this fit")]
    FormulaMismatch(String),

    #[error("column '{0}' not found in the input header")]
    MissingColumn(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl EssRegError {
    pub fn code(&self) -> &'static str {
        use EssRegError::*;
        match self {
            InvalidInput(_) => "ER_INVALID_INPUT",
            EmptyPartition => "ER_EMPTY_PARTITION",
            InvariantViolation => "ER_INVARIANT_VIOLATION",
            AllGridFailed => "ER_ALL_GRID_FAILED",
            GroupTooSmall(_) => "ER_GROUP_TOO_SMALL",
            ZeroCovariance(..) => "ER_ZERO_COVARIANCE",
            SingularAfterRidge(_) => "ER_SINGULAR_AFTER_RIDGE",
            SingularSigmaZ => "ER_SINGULAR_SIGMA_Z",
            SingularInner => "ER_SINGULAR_INNER",
            SingularGram => "ER_SINGULAR_GRAM",
            SingularMiddle => "ER_SINGULAR_MIDDLE",
            LpInfeasible(_) => "ER_LP_INFEASIBLE",
            LpUnbounded(_) => "ER_LP_UNBOUNDED",
            HeterogeneousInputs(_) => "ER_HETEROGENEOUS_INPUTS",
            NonpositiveVariance(_) => "ER_NONPOSITIVE_VARIANCE",
            NoOverlap => "ER_NO_OVERLAP",
            FormulaMismatch(_) => "ER_FORMULA_MISMATCH",
            MissingColumn(_) => "ER_MISSING_COLUMN",
            Io(_) => "ER_IO",
            Parse(_) => "ER_PARSE",
        }
    }
}

impl From<std::io::Error> for EssRegError {
    fn from(e: std::io::Error) -> Self {
        EssRegError::Io(e.to_string())
    }
}

impl From<csv::Error> for EssRegError {
    fn from(e: csv::Error) -> Self {
        EssRegError::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for EssRegError {
    fn from(e: serde_json::Error) -> Self {
        EssRegError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, EssRegError>;
