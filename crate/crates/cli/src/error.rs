use std::fmt;

use vulnscan::corpus::CorpusError;
use vulnscan::forest::ForestError;
use vulnscan::labels::LabelError;
use vulnscan::metrics::MetricsError;
use vulnscan::nn::NnError;

/// Exit status for a malformed command line or configuration key.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for unreadable input file contents.
pub const EXIT_PARSE: i32 = 3;
/// Exit status for failures while doing the work itself.
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    Parse(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(_) | CorpusError::Empty => CliError::Runtime(e.to_string()),
            CorpusError::InvalidRatios(_) => CliError::Usage(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<LabelError> for CliError {
    fn from(e: LabelError) -> Self {
        match e {
            LabelError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::UnknownKey { .. } | NnError::InvalidHyperparam(_) => {
                CliError::Usage(e.to_string())
            }
            NnError::Checkpoint(_) => CliError::Parse(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ForestError> for CliError {
    fn from(e: ForestError) -> Self {
        match e {
            ForestError::UnknownKey { .. } | ForestError::InvalidConfig(_) => {
                CliError::Usage(e.to_string())
            }
            ForestError::Format(_) => CliError::Parse(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}
