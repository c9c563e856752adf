use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("degenerate geometry: nodes are {distance} m apart")]
    DegenerateGeometry { distance: f64 },
    #[error("scenario needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("node {id} at ({x}, {y}) lies outside the deployment area")]
    OutsideArea { id: usize, x: f64, y: f64 },
    #[error("state space of {0} states does not fit a 64-bit key")]
    StateSpaceOverflow(u128),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("state space has {states} states, above the enumeration limit of {limit}")]
    TooLarge { states: u128, limit: usize },
    #[error("value iteration did not reach tolerance {tolerance} within {iterations} sweeps")]
    NotConverged { tolerance: f64, iterations: usize },
    #[error("q-table line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Range { field: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ConfigError {
    pub(crate) fn range(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Range {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown sweep variable `{0}` (expected `arrival` or `service`)")]
    UnknownVariable(String),
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error("reports do not share sweep coordinates: {0}")]
    MismatchedCoordinates(String),
    #[error("sweep needs at least one value, policy and seed")]
    EmptySweep,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
