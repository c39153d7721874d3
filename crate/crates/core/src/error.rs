use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("integrand is not finite at node {node} (value {value})")]
    Evaluation { node: f64, value: f64 },
    #[error("tilt normalizer {0:e} is below 1e-300")]
    DegenerateTilt(f64),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{0} lies inside the spectral support")]
    Domain(f64),
    #[error("R-transform pole: 1 - r*omega <= 0 at omega = {0}")]
    Pole(f64),
    #[error("R-transform inversion failed at omega = {0}")]
    Inversion(f64),
    #[error("scalar minimization failed: {0}")]
    Optimization(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("no converged solution")]
    NoSolution,
    #[error("singular transition system (degenerate mu levels)")]
    Singular,
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
