use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Scenario, experiment or solver configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    /// Linearized system lost rank during the Newton iteration.
    #[error("singular geometry at iteration {iteration}: numerical rank {rank} < 3")]
    SingularGeometry { iteration: usize, rank: usize },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
