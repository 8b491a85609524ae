use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("non-finite vector field at state {state:?}")]
    NumericOverflow { state: Vec<f64> },

    #[error("members disagree on shared parameter `{parameter}`")]
    NonEmbeddable { parameter: String },

    #[error(
        "embedding violated: residual {residual:e} for member {member} at state {state:?}, control {control}"
    )]
    EmbeddingViolation {
        residual: f64,
        member: usize,
        state: Vec<f64>,
        control: f64,
    },

    #[error("cell sets live on different grids")]
    GridMismatch,

    #[error("fixed point did not converge within {iterations} sweeps")]
    NonConvergence { iterations: usize },

    #[error("non-finite dynamics at cell {cell} (state {state:?})")]
    NonFiniteDynamics { cell: usize, state: Vec<f64> },

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("integration step underflow at {state:?}")]
    StepUnderflow { state: Vec<f64> },

    #[error("trajectory left the finite range at step {step}")]
    NonFiniteTrajectory { step: usize },

    #[error("scenario field `{field}`: {message}")]
    Scenario { field: String, message: String },

    #[error("raster line {line}: {message}")]
    Raster { line: usize, message: String },

    #[error("member `{id}`: {source}")]
    Member {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("cancelled")]
    Cancelled,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn scenario(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            field: field.into(),
            message: message.into(),
        }
    }
}
