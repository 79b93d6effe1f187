use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("parameter outside its domain: {0}")]
    ParameterDomain(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    SolverFailure {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("box too small: boundary amplitude is {ratio:.3e} of the peak")]
    BoxTooSmall { ratio: f64 },

    #[error("decay fit failed: {0}")]
    FitFailure(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("stability condition violated: dN/dmu = {n_mu:.3e}")]
    StabilityViolation { n_mu: f64 },

    #[error("symplectic matrix degenerate: det = {det:.3e} < {kappa:.3e}")]
    Degeneracy { det: f64, kappa: f64 },

    #[error("decomposition lost after {steps} Newton steps (constraint norm {constraint:.3e})")]
    DecompositionLost { steps: usize, constraint: f64 },

    #[error("not near the soliton manifold: distance {distance:.3e} exceeds {threshold:.3e}")]
    NotNearManifold { distance: f64, threshold: f64 },

    #[error("blow-up at t = {time}: {reason}")]
    BlowUp { time: f64, reason: String },

    #[error("left the family table range: {0}")]
    DomainExit(String),

    #[error("config error at line {line}, key `{key}`: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub(crate) fn solver(what: impl Into<String>, iterations: usize, residual: f64) -> Self {
        LabError::SolverFailure {
            what: what.into(),
            iterations,
            residual,
        }
    }
}
