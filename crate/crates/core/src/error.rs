use thiserror::Error;

/// Errors raised by the model, transforms, solvers and studies.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular point: the critical steady state diverges at the origin")]
    SingularPoint,

    #[error("supercritical mass: requested {mass} but the critical mass is {critical}")]
    SupercriticalMass { mass: f64, critical: f64 },

    #[error("mass inconsistency: density carries {computed}, grid expects {expected}")]
    MassInconsistency { computed: f64, expected: f64 },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("log singularity in row {row}: zero slope with eps = 0")]
    LogSingularity { row: usize },

    #[error("Newton iteration did not converge (residual {residual:e} after {iterations} iterations)")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("step {step} (t = {time}) failed: {source}")]
    StepFailed {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("singular tridiagonal pivot {pivot:e} in row {row}")]
    SingularPivot { row: usize, pivot: f64 },

    #[error("fit window invalid: {0}")]
    WindowInvalid(String),

    #[error("insufficient samples: {found} in window, need at least {needed}")]
    InsufficientSamples { found: usize, needed: usize },

    #[error("unknown preset '{0}'; valid ids are P1..P7, VAL1D, VAL2D-A, VAL2D-B")]
    UnknownPreset(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the nonlinear solve (as opposed to bad input).
    pub fn is_nonconvergence(&self) -> bool {
        match self {
            Error::NonConvergence { .. } | Error::SingularPivot { .. } => true,
            Error::StepFailed { source, .. } => source.is_nonconvergence(),
            _ => false,
        }
    }
}
