use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model assumption failed; `location` is the rescaled time where it was detected.
    #[error("assumption violated: {inequality} (lhs = {lhs}, rhs = {rhs}{})", fmt_location(*.location))]
    AssumptionViolation {
        inequality: String,
        location: Option<f64>,
        lhs: f64,
        rhs: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("curve is not differentiable to order {order}: {family}")]
    NotDifferentiable { family: &'static str, order: u8 },

    #[error("innovation law has no closed-form moments: {0}")]
    UnsupportedLaw(String),

    #[error("parameter space is empty: p * rho1 = {0} > 1")]
    InfeasibleOmega(f64),

    #[error("kernel support [{lo}, {hi}] around t0 = {t0} leaves the sample [{first}, {n}]")]
    BoundaryViolation {
        t0: usize,
        lo: i64,
        hi: i64,
        first: usize,
        n: usize,
    },

    #[error("local information matrix is singular (condition number {0:e})")]
    SingularSigma(f64),

    #[error("fit is not usable for inference: {0}")]
    FitNotUsable(String),

    #[error("moment condition failed: {0}")]
    MomentCondition(String),

    #[error("stencil [{lo}, {hi}] leaves (0, 1)")]
    StencilOutOfRange { lo: f64, hi: f64 },

    #[error("{failed} of {total} replications failed (limit 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

fn fmt_location(u: Option<f64>) -> String {
    match u {
        Some(u) => format!(", at u = {u}"),
        None => String::new(),
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Error::Io(e.to_string())
        } else {
            Error::Config(e.to_string())
        }
    }
}
