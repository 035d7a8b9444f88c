//! Exit-code contract: 0 pass, 1 residual exceeded, 2 configuration error,
//! 3 numerical failure.

use std::fmt;

use subord_core::Error;

pub const PASS: i32 = 0;
pub const RESIDUAL_EXCEEDED: i32 = 1;
pub const CONFIG_ERROR: i32 = 2;
pub const NUMERICAL_FAILURE: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: CONFIG_ERROR,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: NUMERICAL_FAILURE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_)
            | Error::UnknownFamily(_)
            | Error::BadParams(_)
            | Error::DimensionMismatch { .. }
            | Error::Json(_) => CONFIG_ERROR,
            Error::SingularMatrix { .. }
            | Error::ZeroTransform(_)
            | Error::NonPositiveDensity { .. }
            | Error::NoConvergence { .. }
            | Error::DegenerateTransform
            | Error::JacobianSingular { .. }
            | Error::Invariant(_)
            | Error::Decomposition(_) => NUMERICAL_FAILURE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(format!("i/o: {e}"))
    }
}
