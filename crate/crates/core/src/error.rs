use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("cannot convert zero vector to a direction")]
    ZeroVector,

    #[error("relation set does not cover the scene: {0}")]
    Relations(String),

    #[error("{field}: {message}")]
    Schema { field: String, message: String },

    #[error("object placement failed after {attempts} attempts; try a smaller object count")]
    Placement { attempts: usize },

    #[error("non-finite {what} at step {step}: term `{term}` of object {object}")]
    NonFinite {
        step: usize,
        what: &'static str,
        term: &'static str,
        object: usize,
    },

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by numerical blow-up rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}
