use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),

    #[error("invalid forcing: {0}")]
    InvalidForcing(String),

    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("integrand is singular or non-finite near {location}: {context}")]
    SingularIntegrand { location: f64, context: String },

    #[error("quadrature failed to reach tolerance on [{a}, {b}]")]
    QuadratureNoConvergence { a: f64, b: f64 },

    #[error("value {value} outside the invertible range (infimum {infimum})")]
    OutOfRange { value: f64, infimum: f64 },

    #[error("root finder stalled: {0}")]
    RootFind(String),

    #[error("implicit step failed to converge at t = {t}")]
    StepFailure { t: f64 },

    #[error("iterated-log envelope undefined: quadratic variation {qv} <= e")]
    DomainGuard { qv: f64 },

    #[error("horizon too short: {got} usable sample times, need {need}")]
    InsufficientHorizon { got: usize, need: usize },

    #[error("negative time {0} passed to a time-domain operation")]
    NegativeTime(f64),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
