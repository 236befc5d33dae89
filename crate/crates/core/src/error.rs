use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("invalid action distribution at observation {obs}: {reason}")]
    InvalidDistribution { obs: usize, reason: String },

    #[error("singular design matrix (condition number {condition:.3e})")]
    SingularDesign { condition: f64 },

    #[error("singular linear system of size {0}")]
    SingularSystem(usize),

    #[error("empty replay buffer{0}")]
    EmptyBuffer(String),

    #[error("dual solve did not converge after {iterations} iterations (projected gradient norm {grad_norm:.3e})")]
    DualNotConverged { iterations: usize, grad_norm: f64 },

    #[error("M-step could not restore the KL constraint (KL {kl:.3e} > {limit:.3e})")]
    KlUnrecoverable { kl: f64, limit: f64 },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("iteration {iteration}, epsilon {epsilon}: {source}")]
    Training {
        iteration: usize,
        epsilon: f64,
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
