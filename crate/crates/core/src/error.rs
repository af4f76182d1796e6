use thiserror::Error;

/// Errors raised by every stage of the pipeline.
///
/// The variants are grouped by the process exit code the command line maps
/// them to: configuration problems (2), numerical failures (3) and violated
/// invariants (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("pressure gauge error: {0}")]
    Gauge(String),
    #[error("linear solver failed: {0}")]
    Solver(String),
    #[error("time step too large: Courant number {courant:.4} exceeds 1; use tau <= {required_tau:.6e}")]
    Cfl { courant: f64, required_tau: f64 },
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("time series are misaligned; missing times: {missing:?}")]
    Misaligned { missing: Vec<f64> },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) | Error::Misaligned { .. } | Error::Io(_) => 2,
            Error::Gauge(_) | Error::Solver(_) | Error::Cfl { .. } | Error::Assembly(_) => 3,
            Error::Invariant(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
