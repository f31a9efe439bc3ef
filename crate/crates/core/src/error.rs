use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{what} is not finite at node {node}")]
    NonFinite { what: &'static str, node: usize },
    #[error("{what} is not positive at node {node} (value {value})")]
    NonPositive {
        what: &'static str,
        node: usize,
        value: f64,
    },
    #[error("shape is not convex: smallest {what} is {value} at node {node}")]
    NonConvex {
        what: &'static str,
        node: usize,
        value: f64,
    },
    #[error("curvature tuple leaves the admissible cone at node {node}")]
    ConeViolation { node: usize },
    #[error("invalid curvature specification: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("regime rejected: {0}")]
    RegimeRejected(String),
    #[error("non-finite right-hand side at step {step}, node {node}")]
    NonFiniteRhs { step: usize, node: usize },
    #[error("time step underflow at step {step} (dt = {dt})")]
    DtUnderflow { step: usize, dt: f64 },
    #[error("blow-up time could not be fitted: {0}")]
    FitFailed(String),
    #[error("flow did not converge: {0}")]
    NotConverged(String),
}

impl Error {
    /// True for errors caused by the inputs or the requested regime rather than by
    /// the numerics of a run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::LengthMismatch { .. }
                | Error::InvalidSpec(_)
                | Error::InvalidConfig(_)
                | Error::Domain(_)
        )
    }
}
