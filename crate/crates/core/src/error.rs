use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("no start-goal connectivity after {attempts} attempts")]
    ConnectivityFailure { attempts: usize },

    #[error("no path between start and goal")]
    NoPath,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("pose ({x:.3}, {y:.3}) is outside the world")]
    OutOfBounds { x: f64, y: f64 },

    #[error("selected local goal coincides with the robot position")]
    DegenerateGoal,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite values in tensor `{0}`")]
    NonFinite(String),

    #[error("dataset/model schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("world `{0}` has no shortest path length")]
    MissingLstar(String),

    #[error("policy failure: {0}")]
    Policy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
