use std::fmt;
use std::path::Path;

use sscnn_core::Error;

/// A command failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_DATA: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NON_FINITE: u8 = 3;
pub const EXIT_COLLISION: u8 = 4;

impl Failure {
    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn non_finite(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NON_FINITE,
            message: message.into(),
        }
    }

    pub fn collision(path: &Path) -> Self {
        Self {
            code: EXIT_COLLISION,
            message: format!("{} already exists; pass --force to overwrite", path.display()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::io(e.to_string())
    }
}
