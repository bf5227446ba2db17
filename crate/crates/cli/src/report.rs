use serde::Serialize;

use mpseg::augment::AugmentError;
use mpseg::dataset::DatasetError;
use mpseg::mask::MaskError;
use mpseg::metrics::MetricsError;
use mpseg::pipeline::PipelineError;
use mpseg::synth::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ValidationError,
    IoError,
    Partial,
    InternalError,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::InternalError | Status::IoError => 1,
            Status::ValidationError => 2,
            Status::Partial => 3,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CliReport {
    pub command: String,
    pub status: Status,
    pub payload: serde_json::Value,
    pub warnings: Vec<String>,
}

/// Successful command output: machine payload, human text, warnings.
pub struct Outcome {
    pub payload: serde_json::Value,
    pub text: String,
    pub warnings: Vec<String>,
    pub partial: bool,
}

impl Outcome {
    pub fn new(payload: impl Serialize, text: impl Into<String>) -> Self {
        Self {
            payload: serde_json::to_value(payload).expect("payload serializes"),
            text: text.into(),
            warnings: Vec::new(),
            partial: false,
        }
    }

    pub fn warn(mut self, warnings: Vec<String>) -> Self {
        self.warnings = warnings;
        self
    }
}

#[derive(Debug)]
pub struct CliError {
    pub status: Status,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            status: Status::ValidationError,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            status: Status::IoError,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            status: Status::InternalError,
            message: message.into(),
        }
    }
}

impl From<MaskError> for CliError {
    fn from(e: MaskError) -> Self {
        match e {
            MaskError::Png { .. } => CliError::io(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::io(e.to_string()),
            DatasetError::Pixels {
                source: MaskError::Png { .. },
                ..
            } => CliError::io(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Io { .. } => CliError::io(e.to_string()),
            PipelineError::Stage { .. } => CliError::internal(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io { .. } => CliError::io(e.to_string()),
            SynthError::BadConfig(_) => CliError::validation(e.to_string()),
            _ => CliError::internal(e.to_string()),
        }
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        CliError::validation(e.to_string())
    }
}
