use eloran_td::dataset::DatasetError;
use eloran_td::ingest::IngestError;
use eloran_td::model::ModelError;
use eloran_td::synth::SynthError;
use thiserror::Error;

/// Failure of a command, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("incompatible artifact: {0}")]
    Compat(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Compat(_) => 5,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Incompatible(_) | ModelError::Schema(_) => CliError::Compat(e.to_string()),
            ModelError::UnknownModel(_) => CliError::Config(e.to_string()),
            e if e.is_numeric() => CliError::Numeric(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Split(_) | DatasetError::MissingEndpoints | DatasetError::UnknownStation(_) => {
                CliError::Config(e.to_string())
            }
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(m) => CliError::Config(format!("[scenario] {m}")),
            e => CliError::Data(e.to_string()),
        }
    }
}
