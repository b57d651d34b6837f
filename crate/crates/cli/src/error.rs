use std::fmt;

use fairgm::FairGmError;

/// A failure with its process exit code: 1 for bad input or usage, 2 for numerical failures.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(e: impl fmt::Display) -> Self {
        Self::input(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<FairGmError> for CliError {
    fn from(e: FairGmError) -> Self {
        match e {
            FairGmError::NotPositiveDefinite
            | FairGmError::NonFinite(_)
            | FairGmError::LineSearchFailed(_)
            | FairGmError::UnsupportedPenaltyGradient(_) => CliError::numerical(e.to_string()),
            FairGmError::InvalidDataset(_)
            | FairGmError::InvalidConfig(_)
            | FairGmError::InvalidGenerator(_)
            | FairGmError::Shape(_)
            | FairGmError::MissingLocalSolution(_)
            | FairGmError::TooFewGroups => CliError::input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e)
    }
}
