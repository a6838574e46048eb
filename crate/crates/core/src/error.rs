use thiserror::Error;

/// Errors raised by problem construction, discretization and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("control index {index} out of range ({count} controls)")]
    ControlOutOfRange { index: usize, count: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite {what} at {location}")]
    NonFinite { what: String, location: String },

    #[error("decomposition: {0}")]
    Decomposition(String),

    #[error("singular diagonal {diagonal} at node {node} (implicit CFL bound violated?)")]
    SingularDiagonal { node: usize, diagonal: f64 },

    #[error("policy iteration hit the cap of {iterations} iterations (residual {residual:e})")]
    PolicyIteration { iterations: usize, residual: f64 },

    #[error("linear sweeps hit the cap of {sweeps} sweeps (residual {residual:e})")]
    LinearSolver { sweeps: usize, residual: f64 },

    #[error("CFL violated: explicit margin {explicit}, implicit margin {implicit}, positive type {positive}")]
    Cfl {
        explicit: f64,
        implicit: f64,
        positive: bool,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics themselves (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::SingularDiagonal { .. }
                | Error::PolicyIteration { .. }
                | Error::LinearSolver { .. }
                | Error::Cfl { .. }
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Config(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
