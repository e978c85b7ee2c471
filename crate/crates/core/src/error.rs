use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("polynomial degree {0} out of range")]
    Degree(usize),
    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),
    #[error("functions live on incompatible spaces")]
    SpaceMismatch,
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("mesh lacks the patch structure needed for interpolation")]
    PatchStructureMissing,
    #[error("weight m[{0}] is zero")]
    ZeroWeight(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Degree(_) | Error::OutsideDomain(..) | Error::ZeroWeight(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
