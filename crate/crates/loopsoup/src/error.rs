use thiserror::Error;

/// Errors surfaced by the library. Numerical failures carry enough context to
/// tell "bad input" apart from "bad conditioning".
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("loop is not a valid nearest-neighbour closed path: {0}")]
    MalformedLoop(String),

    #[error("enumeration budget exceeded: {visited} walk prefixes explored (cap {cap}); shrink maxlen or the domain")]
    BudgetExceeded { visited: u64, cap: u64 },

    #[error("matrix is not positive definite (factorization failed{})", .hint.as_ref().map(|h| format!("; {h}")).unwrap_or_default())]
    NotPositiveDefinite { hint: Option<String> },

    #[error("linear solve did not reach tolerance: residual {residual:.3e} > {tol:.3e} after {iters} iterations")]
    SolveFailed { residual: f64, tol: f64, iters: usize },

    #[error("not enough samples: got {got}, need at least {need} for {what}")]
    TooFewSamples { got: usize, need: usize, what: &'static str },

    #[error("conformal map not invertible at ({x}, {y})")]
    MapNotInvertible { x: f64, y: f64 },

    #[error("expression error: {0}")]
    Expr(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown experiment '{name}'; known: {known}")]
    UnknownExperiment { name: String, known: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
