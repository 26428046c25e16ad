use std::fmt;

use serde::Serialize;

/// One offending cell in an input table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DataIssue {
    /// 1-based data row (the header is row 0).
    pub row: usize,
    pub column: String,
    pub value: String,
    pub message: String,
}

impl fmt::Display for DataIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "row {}, column {}: {:?} ({})",
            self.row, self.column, self.value, self.message
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("calibration failed: target mass {target} exceeds the maximum attainable mass {max_attainable}")]
    Calibration { target: f64, max_attainable: f64 },

    #[error("{} data error(s); first: {}", .0.len(), .0.first().map(|i| i.to_string()).unwrap_or_default())]
    Data(Vec<DataIssue>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
