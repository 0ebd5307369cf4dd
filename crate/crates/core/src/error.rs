use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("value {value} outside the valid range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("level set at energy {energy} is not a single convex well")]
    NonConvexLevelSet { energy: f64 },

    #[error("level set at energy {energy} is unbounded")]
    UnboundedLevelSet { energy: f64 },

    #[error("quadrature did not converge (last estimate {estimate}, change {change})")]
    QuadratureNotConverged { estimate: f64, change: f64 },

    #[error("root finding did not converge: {0}")]
    RootNotConverged(String),

    #[error("small divisor {divisor:.3e} at Fourier mode n = {mode} ({kind})")]
    Resonance { mode: i64, divisor: f64, kind: &'static str },

    #[error("Newton iteration failed after {iterations} steps (defect {defect:.3e})")]
    NewtonNotConverged { iterations: usize, defect: f64 },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("state blew up at t = {t}")]
    BlowUp { t: f64 },

    #[error("sequence is not skew-symmetric (max defect {defect:.3e})")]
    NotSkewSymmetric { defect: f64 },

    #[error("spectral parameter {re} + {im}i lies on the cut")]
    OnSpectralCut { re: f64, im: f64 },

    #[error("measurement window reaches the lattice boundary: {0}")]
    BoundaryReached(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("truncation mass {mass:.3e} exceeds threshold {threshold:.3e}")]
    TruncationExceeded { mass: f64, threshold: f64 },

    #[error("modulation window exhausted: {0}")]
    WindowExhausted(String),

    #[error("eigenvalue computation failed")]
    EigenFailure,

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
