use thiserror::Error;

/// Errors shared by all numerical modules.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field has representation {found:?}, operation requires {expected:?}")]
    WrongRepresentation { expected: crate::field::Repr, found: crate::field::Repr },

    #[error("packet support violates grid boundary margin: {0}")]
    SupportViolation(String),

    #[error("negative evolution step tau = {0}")]
    NegativeTau(f64),

    #[error("boundary mass {mass:.3e} exceeds abort threshold {threshold:.3e}")]
    BoundaryMassAbort { mass: f64, threshold: f64 },

    #[error("caustic proximity: |sin(alpha*t)| = {sin_abs:.3e} at alpha = {alpha:.6} (t = {t})")]
    CausticProximity { alpha: f64, t: f64, sin_abs: f64 },

    #[error("regularized oscillatory integral did not stabilize: {0}")]
    OscillatoryNonConvergent(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed field dump: {0}")]
    MalformedDump(String),
}
