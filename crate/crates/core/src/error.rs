use thiserror::Error;

/// Errors raised by the thermo-battery library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("beta*|E| = {0} exceeds the exponent guard")]
    OverflowRisk(f64),
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("level {0} has zero probability")]
    ZeroProbability(usize),
    #[error("state has weight on level {0} where the reference has none")]
    SupportMismatch(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("states live on different spectra")]
    SpectrumMismatch,
    #[error("battery spectrum is not uniformly spaced")]
    NonUniformBattery,
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("LP solver failure: {0}")]
    SolverFailure(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("invalid subchannels: {0}")]
    InvalidSubchannels(String),
    #[error("geometric series does not converge (spectral radius {0})")]
    NonConvergentSeries(f64),
    #[error("ETI violated above k_min = {k_min}: max deviation {max_violation:e}")]
    EtiViolated { k_min: usize, max_violation: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("closed form has a pole: {0}")]
    Pole(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
