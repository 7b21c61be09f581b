use std::path::PathBuf;

/// Errors raised anywhere in the grouping and rule pipeline.
///
/// Each variant names the stage that produced it so a failing command can be
/// traced back to the module at fault.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("ingest: {0}")]
    Ingest(String),

    #[error("ingest: corrupt input: {malformed} of {lines} lines malformed")]
    CorruptInput { malformed: usize, lines: usize },

    #[error("features: {0}")]
    Features(String),

    #[error("embedding: {0}")]
    Embedding(String),

    #[error("grouping: {0}")]
    Grouping(String),

    #[error("rules: {0}")]
    Rules(String),

    #[error("eval: {0}")]
    Eval(String),

    #[error("synth: {0}")]
    Synth(String),

    #[error("config: {0}")]
    Config(String),

    #[error("artifact: {0}")]
    Artifact(String),

    #[error("internal: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error: 1 usage/config, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Internal(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
