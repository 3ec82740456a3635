use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("initial data rejected at cell ({i}, {j}): {reason}")]
    InitialData { i: usize, j: usize, reason: String },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e}, target {target:.3e})")]
    SolverFailure {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("time step control failed: {0}")]
    StepControl(String),

    #[error("invalid domain partition: {0}")]
    Partition(String),

    #[error("subdomain {tissue} vanished ({cells} cells left)")]
    VanishingDomain { tissue: usize, cells: usize },

    #[error("configuration errors:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
