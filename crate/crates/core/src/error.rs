use thiserror::Error;

/// Crate-wide error type; variants map onto the pipeline stages so the CLI
/// can assign distinct exit codes.
#[derive(Error, Debug)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("endstates inconsistent with a traveling wave: Rankine-Hugoniot residual {residual:.3e} > {tol:.3e}")]
    RankineHugoniot { residual: f64, tol: f64 },

    #[error("(H2) violation: {0}")]
    LaxCondition(String),

    #[error("Newton iteration failed to converge: {0}")]
    NewtonDiverged(String),

    #[error("matrix is singular or near-singular (min pivot ratio {pivot_ratio:.3e})")]
    Singular { pivot_ratio: f64 },

    #[error("lambda = {lambda:?} is too close to the discrete spectrum (pivot ratio {pivot_ratio:.3e})")]
    NearSpectrum {
        lambda: num_complex::Complex<f64>,
        pivot_ratio: f64,
    },

    #[error("spectral error: {0}")]
    Spectral(String),

    #[error("(H0) violation: {0}")]
    Hypothesis(String),

    #[error("contraction failure: measured ratio {ratio:.3} >= 1 ({context})")]
    ContractionFailure { ratio: f64, context: String },

    #[error("eigenvalue tracking lost: {0}")]
    TrackingLost(String),

    #[error("reduction error: {0}")]
    Reduction(String),

    #[error("bifurcation error: {0}")]
    Bifurcation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable exit code for the CLI contract. 0 is success, 1 is reserved
    /// for unexpected panics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Model(_)
            | Error::RankineHugoniot { .. }
            | Error::LaxCondition(_)
            | Error::NewtonDiverged(_) => 3,
            Error::Singular { .. }
            | Error::NearSpectrum { .. }
            | Error::Spectral(_)
            | Error::Hypothesis(_)
            | Error::TrackingLost(_) => 4,
            Error::ContractionFailure { .. } | Error::Reduction(_) => 5,
            Error::Bifurcation(_) => 6,
            Error::Io(_) => 7,
        }
    }
}
