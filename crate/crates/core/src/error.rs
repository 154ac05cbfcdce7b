use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("coincident points at indices {0} and {1}: minimal separation would be zero")]
    CoincidentPoints(usize, usize),

    #[error("index {index:?} has |k|_2 = {norm:.6} which is not below the degree bound {bound}")]
    DegreeBound {
        index: Vec<i32>,
        norm: f64,
        bound: f64,
    },

    #[error("fourier table degree {have} is below the requested degree {need}")]
    InsufficientDegree { have: f64, need: f64 },

    #[error(
        "grid of {grid} points per axis cannot resolve degree {degree} (need more than {need})"
    )]
    GridTooSmall { grid: usize, degree: f64, need: f64 },

    #[error("singular matrix (condition estimate {condition:e})")]
    SingularMatrix { condition: f64 },

    #[error("activation has |phi_hat(1)| = {0:e}, too small to build a network")]
    DegenerateActivation(f64),

    #[error("network precondition failed: {0}")]
    NetworkPrecondition(String),

    #[error("minimum-degree search exceeded the cap {cap}")]
    SearchCap { cap: f64 },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("LP size {vars} variables x {rows} constraints exceeds the cap {cap}; coarsen the derivative grid")]
    LpTooLarge {
        vars: usize,
        rows: usize,
        cap: usize,
    },

    #[error("dag: {0}")]
    Dag(String),

    #[error("node `{node}`: {message}")]
    Node { node: String, message: String },

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("toml: {0}")]
    Toml(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::SingularMatrix { .. }
            | Error::Lp(_)
            | Error::SearchCap { .. }
            | Error::NetworkPrecondition(_) => ErrorKind::Numerical,
            Error::Node { message, .. } if message.contains("singular") => ErrorKind::Numerical,
            Error::Stage { source, .. } => source.kind(),
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
