//! Pipeline orchestration behind the `fxcurve` binary.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod emit;
pub mod pipeline;
pub mod run;

use std::fmt;

/// Failure of a CLI stage, carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub stage: Option<String>,
    pub date: Option<String>,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.stage, &self.date) {
            (Some(s), Some(d)) => write!(f, "[{s} @ {d}] {}", self.message),
            (Some(s), None) => write!(f, "[{s}] {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub const INPUT: i32 = 1;
    pub const NUMERIC: i32 = 2;

    pub fn input(message: impl Into<String>) -> Self {
        Self { code: Self::INPUT, stage: None, date: None, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::input(format!("configuration error: {}", message.into()))
    }

    pub fn at(mut self, stage: &str, date: Option<&str>) -> Self {
        if self.stage.is_none() {
            self.stage = Some(stage.to_string());
            self.date = date.map(str::to_string);
        }
        self
    }
}

impl From<fxcurve::Error> for CliError {
    fn from(e: fxcurve::Error) -> Self {
        let code = if e.is_numeric() { Self::NUMERIC } else { Self::INPUT };
        Self { code, stage: None, date: None, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(format!("io error: {e}"))
    }
}

/// Attaches a stage name and optional date to core errors.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &str, date: Option<&str>) -> Result<T, CliError>;
}

impl<T, E: Into<CliError>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &str, date: Option<&str>) -> Result<T, CliError> {
        self.map_err(|e| e.into().at(stage, date))
    }
}
