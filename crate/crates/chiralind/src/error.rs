use thiserror::Error;

pub type Result<T> = std::result::Result<T, ChiralError>;

#[derive(Debug, Error)]
pub enum ChiralError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("model invalid: {0}")]
    ModelInvalid(String),

    #[error("site {site}: interior hopping matrix {which} is singular or ill-conditioned (cond {cond:.3e} > kappa_max {kappa_max:.3e})")]
    SingularInterior {
        site: i64,
        which: &'static str,
        cond: f64,
        kappa_max: f64,
    },

    #[error("site index {a} outside window [{n_min}, {n_max}]")]
    SiteOutsideWindow { a: i64, n_min: i64, n_max: i64 },

    #[error("eigensolver failed: {0}")]
    SolverFailure(String),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("spectral gap violated: {0}")]
    GapViolation(String),

    #[error("gap closed: {0}")]
    GapClosed(String),

    #[error("kernel vector {index} has ambiguous decay (right/left mass ratio {ratio:.3e} inside [{lo:.1e}, {hi:.1e}])")]
    UndecidableDecay {
        index: usize,
        ratio: f64,
        lo: f64,
        hi: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical overflow at step {step}: {hint}")]
    Overflow { step: usize, hint: String },

    #[error("generation failed: {0}")]
    GenerationFailure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}
