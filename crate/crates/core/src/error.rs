use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Hilbert space: {0}")]
    InvalidSpace(String),

    #[error("invalid atom index {0}; expected 1 or 2")]
    InvalidAtomIndex(usize),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("steady state did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("sparse factorization failed at shift {shift:e}: {msg}")]
    SingularFactorization { shift: f64, msg: String },

    #[error("step size {dt:e} violates stability bound: dt * {scale:e} = {product:e} >= {bound}")]
    Stability {
        dt: f64,
        scale: f64,
        product: f64,
        bound: f64,
    },

    #[error("unsupported excitation number {0}; only 1 and 2 are available")]
    UnsupportedExcitation(usize),

    #[error("operation requires a one-dimensional sweep, got {0} axes")]
    NotOneDimensional(usize),

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("trajectory norm is not finite at t = {0} us")]
    NormUnderflow(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical solver, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::SingularFactorization { .. }
                | Error::NormUnderflow(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
