use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("state is not physical: {0}")]
    NonPhysical(String),

    #[error("multiphoton correction impossible: noise weight {epsilon} >= 1")]
    CorrectionImpossible { epsilon: f64 },

    #[error("optimizer did not converge after {iterations} iterations (last improvement {last_improvement:e}, log-likelihood {log_likelihood})")]
    NoConvergence {
        iterations: usize,
        last_improvement: f64,
        log_likelihood: f64,
    },

    #[error("missing tomography setting ({0}, {1})")]
    MissingSetting(String, String),

    #[error("duplicate tomography setting ({0}, {1})")]
    DuplicateSetting(String, String),

    #[error("notch filter discarded every event")]
    EmptySelection,

    #[error("spectral grid too narrow: {outside_fraction:.3e} of the emission falls outside")]
    GridTooNarrow { outside_fraction: f64 },

    #[error("spectra are defined on different grids")]
    GridMismatch,

    #[error("degenerate fit design: {0}")]
    DegenerateDesign(String),

    #[error("no weight inside analysis window [{lo}, {hi}] eV")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
