use std::fmt;

use mobman_core::anchoring::AnchorError;
use mobman_core::diffusion::DiffusionError;
use mobman_core::jsonl::JsonlError;
use mobman_core::pipeline::PipelineError;
use mobman_core::sim::SimError;

/// Failure classes with stable exit codes: 1 for domain rejections, 2 for
/// unusable invocations or inputs.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Rejected(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Rejected(_) => 1,
            Self::Usage(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Rejected(m) => write!(f, "rejected: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<JsonlError> for CliError {
    fn from(e: JsonlError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Input { .. } | PipelineError::Jsonl(_) | PipelineError::InvalidCalib { .. } => {
                Self::Usage(e.to_string())
            }
            _ => Self::Rejected(e.to_string()),
        }
    }
}

impl From<AnchorError> for CliError {
    fn from(e: AnchorError) -> Self {
        Self::Rejected(e.to_string())
    }
}

impl From<DiffusionError> for CliError {
    fn from(e: DiffusionError) -> Self {
        match e {
            DiffusionError::EmptyDataset | DiffusionError::Checkpoint { .. } => Self::Usage(e.to_string()),
            _ => Self::Rejected(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(_) | SimError::Csv(_) => Self::Usage(e.to_string()),
            _ => Self::Rejected(e.to_string()),
        }
    }
}
