use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    /// Dyadic or adaptive refinement did not settle within the configured budget.
    #[error("integrability error: refinement did not converge ({detail}); partial sum {partial}")]
    Integrability { partial: f64, detail: String },

    #[error("operational horizon {op_horizon} too short: D reached {reached} but t-horizon {needed} was requested")]
    Horizon { op_horizon: f64, reached: f64, needed: f64 },

    #[error("blow-up: |X| = {value} exceeded bound {bound} at t = {t}")]
    BlowUp { t: f64, value: f64, bound: f64 },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("criteria error: {0}")]
    Criteria(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Configuration(_) => "configuration",
            Error::Integrability { .. } => "integrability",
            Error::Horizon { .. } => "horizon",
            Error::BlowUp { .. } => "blow-up",
            Error::Evaluation(_) => "evaluation",
            Error::Precondition(_) => "precondition",
            Error::Criteria(_) => "criteria",
            Error::Malformed(_) => "malformed",
            Error::Fit(_) => "fit",
            Error::Io(_) => "io",
        }
    }
}
