use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Evaluation point outside the domain where the quantity is defined.
    #[error("{op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("particle collision at step {step} (t = {time:.6e}) after {halvings} step halvings")]
    Collision { step: usize, time: f64, halvings: u32 },

    #[error("kernel step unstable at step {step}: CFL number {cfl:.3} > 1, rerun the path with a smaller dt")]
    Cfl { step: usize, cfl: f64 },

    #[error("eigensolver failed for sample with seed {seed}: {msg}")]
    Eigensolver { seed: u64, msg: String },

    #[error("singular system in {0}")]
    Singular(&'static str),

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain { op, msg: msg.into() }
    }
}
