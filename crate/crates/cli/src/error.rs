use std::io;
use std::path::Path;

use fmv_core::exec::ExecError;
use fmv_core::generate::GenerationError;
use fmv_core::ingest::IngestError;
use fmv_core::matrix::MatrixError;
use fmv_core::metrics::MetricsError;
use fmv_core::simulate::SimulationError;

/// Failure of a pipeline stage, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration values.
    #[error("usage error: {0}")]
    Usage(String),
    /// Input files that are malformed, inconsistent or tampered with.
    #[error("data error: {0}")]
    Data(String),
    /// The environment let us down: runner, network, filesystem.
    #[error("infrastructure error: {0}")]
    Infra(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Infra(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        CliError::Infra(format!("{}: {err}", path.display()))
    }

    /// Reading a user-supplied input: a missing file is a data problem.
    pub fn read(path: &Path, err: io::Error) -> Self {
        if err.kind() == io::ErrorKind::NotFound {
            CliError::Data(format!("{}: {err}", path.display()))
        } else {
            CliError::io(path, err)
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { ref source, .. } if source.kind() != io::ErrorKind::NotFound => {
                CliError::Infra(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ExecError> for CliError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::InvalidRunner { .. } | ExecError::InvalidLimits(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Infra(e.to_string()),
        }
    }
}

impl From<MatrixError> for CliError {
    fn from(e: MatrixError) -> Self {
        match e {
            MatrixError::Execution { .. } | MatrixError::Cache { .. } => {
                CliError::Infra(e.to_string())
            }
            MatrixError::ZeroParallelism => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GenerationError> for CliError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            GenerationError::EmptyPrompt(_) => CliError::Data(e.to_string()),
            _ => CliError::Infra(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::ZeroResamples | MetricsError::ZeroBudget | MetricsError::ZeroTrials => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Metrics(m) => m.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
