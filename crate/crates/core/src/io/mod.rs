//! File formats: scenario JSON, requests CSV, coalition games, results and
//! trade logs.

mod game_file;
mod results;
mod scenario_file;
mod tables;

use std::path::Path;

use thiserror::Error;

pub use game_file::{game_to_json, load_game, parse_game_json};
pub use results::{
    parse_results_csv, parse_results_json, read_results, results_csv, results_json, write_results, ResultFormat,
    ResultSet,
};
pub use scenario_file::{
    load_scenario, load_scenario_seeded, parse_scenario, parse_scenario_seeded, scenario_to_json, NetworkSource,
};
pub use tables::{parse_bids, parse_requests_csv, trade_log_csv, RequestRow};

#[derive(Debug, Error, PartialEq)]
pub enum IoError {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl IoError {
    pub(crate) fn validation(field: impl Into<String>, message: impl ToString) -> IoError {
        IoError::Validation { field: field.into(), message: message.to_string() }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|e| IoError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Maps a serde_json error, lifting unknown-field rejections to `UnknownKey`.
pub(crate) fn json_error(source: &str, e: serde_json::Error) -> IoError {
    let msg = e.to_string();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            return IoError::UnknownKey(rest[..end].to_string());
        }
    }
    let location = if e.line() == 0 { source.to_string() } else { format!("{source} line {} column {}", e.line(), e.column()) };
    IoError::Parse { location, message: msg }
}
