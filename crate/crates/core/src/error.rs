use thiserror::Error;

/// Failure modes of the solvers and the study harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// The Poisson source does not integrate to zero (net charge on the torus).
    #[error("charge imbalance: |mean(source)| = {mean:e} exceeds {tolerance:e}")]
    Compatibility { mean: f64, tolerance: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("blow-up at t = {time}: {reason}")]
    BlowUp { time: f64, reason: String },

    #[error("{species} density fell to {min:e} (floor {floor:e}) at t = {time}")]
    DensityFloor {
        species: &'static str,
        min: f64,
        floor: f64,
        time: f64,
    },

    /// Pressureless ion characteristics crossed (shock formation in the limit system).
    #[error("ion characteristics cross at t = {time} (compression margin {margin:e})")]
    CharacteristicCrossing { time: f64, margin: f64 },

    #[error("time {time} outside profile range [{start}, {end}]")]
    OutOfRange { time: f64, start: f64, end: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to I/O or configuration).
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Config(_) | Error::Format(_) | Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
