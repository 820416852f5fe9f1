use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("discretization failed at node {node}: {reason}")]
    Discretization { node: usize, reason: String },

    #[error("constraint {index} could not be linearized: {reason}")]
    Linearization { index: usize, reason: String },

    #[error("trajectory subproblem failed ({status}) at iteration {iteration}")]
    TrajectoryUpdate { iteration: usize, status: String },

    #[error("Lipschitz estimation failed at node {node}: {reason}")]
    Estimation { node: usize, reason: String },

    #[error("funnel update failed: {0}")]
    FunnelUpdate(String),

    #[error("support value dual failed at node {node}: {reason}")]
    SupportDual { node: usize, reason: String },

    #[error("numerical failure at node {node}: {reason}")]
    Numerical { node: usize, reason: String },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("rollout failed for sample {sample}: {reason}")]
    Rollout { sample: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("{file}: {reason}")]
    Bundle { file: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
