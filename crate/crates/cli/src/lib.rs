//! Command-line driver: scenario files, runs, sweeps, equilibrium finding,
//! histogram fitting and verification suites.

pub mod commands;
pub mod scenario;
pub mod verify;

/// A command failure with its process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    /// Configuration or parse problem, exit code 1.
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    /// Non-convergence, exit code 2.
    pub fn diverged(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<qualdyn::Error> for Failure {
    fn from(err: qualdyn::Error) -> Self {
        match err {
            qualdyn::Error::NonConvergence(_) => Failure::diverged(err.to_string()),
            other => Failure::config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::config(format!("i/o error: {err}"))
    }
}
