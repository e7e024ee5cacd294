use thiserror::Error;

/// Errors shared by the solver modules and the CLI layer.
#[derive(Error, Debug)]
pub enum Error {
    #[error("arity mismatch: {0} vs {1}")]
    ArityMismatch(usize, usize),
    #[error("truncation order mismatch: {0} vs {1}")]
    OrderMismatch(u32, u32),
    #[error("pair index {index} out of range for arity {arity}")]
    IndexOutOfRange { index: usize, arity: usize },
    #[error("invalid Williamson spec: all block counts are zero")]
    InvalidSpec,
    #[error("log gamma undefined on the axes (x*y = 0)")]
    UndefinedOnAxes,
    #[error("right-hand side has a nonzero constant term in pair {0}")]
    NonzeroConstantTerm(usize),
    #[error("quadrature failed to reach tolerance {tol} (best error estimate {estimate})")]
    QuadratureFailure { tol: f64, estimate: f64 },
    #[error("unsolvable factor in pair {0}: {1}")]
    UnsolvableFactor(usize, String),
    #[error("precondition violated: constraint residual {residual} for pair {pair}")]
    PreconditionViolated { pair: usize, residual: f64 },
    #[error("form is not closed: residual {0}")]
    NotClosed(f64),
    #[error("degree overflow: cannot raise a degree-{0} form on arity {1}")]
    DegreeOverflow(usize, usize),
    #[error("evaluation failure: {0}")]
    EvaluationFailure(String),
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("schema error at {path}: {message}")]
    SchemaError { path: String, message: String },
    #[error("model error: {0}")]
    ModelError(String),
}

impl Error {
    /// Stable machine-readable code, used by the CLI report format.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ArityMismatch(..) => "ARITY_MISMATCH",
            Error::OrderMismatch(..) => "ORDER_MISMATCH",
            Error::IndexOutOfRange { .. } => "INDEX_OUT_OF_RANGE",
            Error::InvalidSpec => "INVALID_SPEC",
            Error::UndefinedOnAxes => "UNDEFINED_ON_AXES",
            Error::NonzeroConstantTerm(..) => "NONZERO_CONSTANT_TERM",
            Error::QuadratureFailure { .. } => "QUADRATURE_FAILURE",
            Error::UnsolvableFactor(..) => "UNSOLVABLE_FACTOR",
            Error::PreconditionViolated { .. } => "PRECONDITION_VIOLATED",
            Error::NotClosed(..) => "NOT_CLOSED",
            Error::DegreeOverflow(..) => "DEGREE_OVERFLOW",
            Error::EvaluationFailure(..) => "EVALUATION_FAILURE",
            Error::ParseError(..) => "PARSE_ERROR",
            Error::SchemaError { .. } => "SCHEMA_ERROR",
            Error::ModelError(..) => "MODEL_ERROR",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
