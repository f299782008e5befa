use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("gamma function pole at x = {0}")]
    GammaPole(f64),

    #[error("hypergeometric series did not converge within {terms} terms at z = {z}")]
    NonConvergence { terms: usize, z: f64 },

    #[error("continuation hypothesis violated: {0}")]
    ContinuationHypothesis(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("quadrature failed: {reason} (value {value:e}, error estimate {error:e})")]
    Quadrature {
        reason: String,
        value: f64,
        error: f64,
    },

    #[error("could not construct benchmark datum: {0}")]
    Construction(String),

    #[error("degenerate initial data: {0}")]
    DegenerateData(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedCase(String),

    #[error("too close to blowup: Q = {q:e} at x = {x} for eta = {eta}")]
    BlowupProximity { eta: f64, x: f64, q: f64 },

    #[error("cannot decide finiteness of the blowup time: endpoint exponent {sigma}")]
    DivergenceUndecidable { sigma: f64 },

    #[error("fit window too small: {have} samples, need at least {need}")]
    InsufficientWindow { have: usize, need: usize },

    #[error("time step {dt:e} violates the stability bound {bound:e}")]
    Cfl { dt: f64, bound: f64 },

    #[error("resolution lost at t = {t}: tail fraction {tail:e}, max|u_x| = {max_ux:e}")]
    ResolutionLoss { t: f64, tail: f64, max_ux: f64 },

    #[error("boundary residual {residual:e} exceeds tolerance")]
    BoundaryResidual { residual: f64 },

    #[error("mean of u_x is {mean:e}, expected zero")]
    MeanViolation { mean: f64 },

    #[error("parameters outside the theorem's hypotheses: {0}")]
    Hypothesis(String),

    #[error("{0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
