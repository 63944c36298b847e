use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e} > tolerance {tolerance:.3e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid noise model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("closed loop is unstable (spectral radius {radius:.6})")]
    Unstable { radius: f64 },

    #[error("state norm {norm:.3e} exceeded overflow guard at step {step}")]
    Overflow { step: usize, norm: f64 },

    #[error("quadrature did not converge: {nodes} vs {} nodes differ by {difference:.3e} bits", 2 * nodes)]
    Quadrature { nodes: usize, difference: f64 },

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_)
            | Error::InvalidModel(_)
            | Error::InvalidArgument(_)
            | Error::Dimension(_)
            | Error::NotSymmetric { .. }
            | Error::NonFinite => 2,
            _ => 3,
        }
    }
}
