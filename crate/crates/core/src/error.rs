use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every structured failure the simulator can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dataset generation failed: {0}")]
    Generation(String),

    #[error("trigger injection failed: graph has {graph_nodes} nodes, trigger needs {trigger_nodes}")]
    Injection { graph_nodes: usize, trigger_nodes: usize },

    #[error("poisoning failed for client {client}: {message}")]
    Poisoning { client: usize, message: String },

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("defense failed: {0}")]
    Defense(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("round {round}, client {client}: {source}")]
    Client {
        round: usize,
        client: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    /// Short stable tag used as the diagnostic prefix by the command line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::Generation(_) => "generation",
            Error::Injection { .. } => "injection",
            Error::Poisoning { .. } => "poisoning",
            Error::Evaluation(_) => "evaluation",
            Error::Defense(_) => "defense",
            Error::UndefinedCorrelation(_) => "correlation",
            Error::Client { source, .. } => source.kind(),
        }
    }
}
