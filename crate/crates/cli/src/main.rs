mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use oodgap_core::config::ConfigError;
use oodgap_core::EvalError;
use oodgap_distort::DistortError;

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Input data failed validation or could not be evaluated.
    Data = 1,
    /// Bad config or arguments that name unknown things.
    Config = 2,
    Internal = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub status: Status,
    pub message: String,
}

impl CliError {
    pub fn data(message: impl Into<String>) -> Self {
        CliError { status: Status::Data, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError { status: Status::Config, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError { status: Status::Internal, message: message.into() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(_) | EvalError::UnknownDataset(_) | EvalError::UnknownDecider(_) => {
                CliError::config(e.to_string())
            }
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<DistortError> for CliError {
    fn from(e: DistortError) -> Self {
        match e {
            DistortError::UnsupportedLevel { .. } | DistortError::DuplicateCondition(_) => {
                CliError::config(e.to_string())
            }
            DistortError::Io { .. } => CliError::internal(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

fn init_logging() {
    let style = if std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty()) {
        env_logger::WriteStyle::Never
    } else {
        env_logger::WriteStyle::Auto
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .write_style(style)
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.status as u8)
        }
    }
}
