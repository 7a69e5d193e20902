use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid hamiltonian: {0}")]
    InvalidHamiltonian(String),

    #[error("malformed path: {0}")]
    MalformedPath(String),

    /// The path has zero density under the measure: zero initial mass or a
    /// zero rate on a traversed transition. This is a statement about
    /// absolute continuity, not a numerical failure.
    #[error("path outside the support of the measure: {0}")]
    OutsideSupport(String),

    /// A score could not be formed because one side of the log-derivative
    /// vanished on the offending path.
    #[error("measures are not equivalent on path `{path}`: {reason}")]
    Equivalence { path: String, reason: String },

    #[error("thinning bound violated: rate {rate} exceeds bound {bound} at s = {time}")]
    ThinningBound { rate: f64, bound: f64, time: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("trajectory {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("boundary condition violated: {0}")]
    BoundaryCondition(String),

    #[error("enumeration of {paths} paths exceeds the limit of {limit}")]
    EnumerationTooLarge { paths: f64, limit: usize },

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid bias: {0}")]
    InvalidBias(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
