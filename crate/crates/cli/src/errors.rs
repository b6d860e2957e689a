//! Exit-code discipline: 0 ok, 1 property failure, 2 input error,
//! 3 advisory.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: missing files, malformed config, unknown names. Exit 2.
    Input(String),
    /// A verified property failed. Exit 1.
    Property(String),
    /// Non-fatal advisory outcome (e.g. composition overflow). Exit 3.
    Advisory(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Property(_) => 1,
            CliError::Input(_) => 2,
            CliError::Advisory(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Property(m) | CliError::Advisory(m) => f.write_str(m),
        }
    }
}

impl From<krauskge_core::Error> for CliError {
    fn from(e: krauskge_core::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
