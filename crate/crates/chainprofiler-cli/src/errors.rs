use chainprofiler::embeddings::EmbeddingError;
use chainprofiler::eval::EvalError;
use chainprofiler::fingerprint::FingerprintError;
use chainprofiler::ingest::IngestError;
use chainprofiler::profiles::ProfileError;
use chainprofiler::tornado::TornadoError;
use chainprofiler::txgraph::GraphError;

/// Failure classes with distinct exit codes: bad arguments, configuration,
/// or input content exit with 2; filesystem and network trouble with 1.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ProfileError> for CliError {
    fn from(e: ProfileError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<TornadoError> for CliError {
    fn from(e: TornadoError) -> Self {
        match e {
            TornadoError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<FingerprintError> for CliError {
    fn from(e: FingerprintError) -> Self {
        CliError::Validation(e.to_string())
    }
}
