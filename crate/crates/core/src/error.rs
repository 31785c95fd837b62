use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV in {path} at line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path} line {line}: cannot parse {field} from {value:?}")]
    Parse {
        path: PathBuf,
        line: u64,
        field: &'static str,
        value: String,
    },

    #[error("{path} line {line}: duplicate cell ({entity}, {indicator}, {year})")]
    DuplicateCell {
        path: PathBuf,
        line: u64,
        entity: String,
        indicator: String,
        year: i32,
    },

    #[error("indicator {0:?} has no node assignment")]
    UnassignedIndicator(String),

    #[error("{} cell(s) observed by no entity, e.g. {}", cells.len(), format_cells(cells))]
    Unimputable { cells: Vec<(String, i32)> },

    #[error("node {0:?} has no indicators")]
    EmptyNode(String),

    #[error("invalid grouping {name:?}: {reason}")]
    InvalidGrouping { name: String, reason: String },

    #[error("need at least {needed} samples, got {got}")]
    SampleSize { needed: usize, got: usize },

    #[error("sample count mismatch: expected {expected}, got {got}")]
    SampleMismatch { expected: usize, got: usize },

    #[error("input contains non-finite values")]
    NonFinite,

    #[error("expected a {expected} matrix, got {got}")]
    KindMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("graph has no positive edge weights")]
    DegenerateGraph,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_cells(cells: &[(String, i32)]) -> String {
    cells
        .iter()
        .take(5)
        .map(|(k, t)| format!("({k}, {t})"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by degenerate numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateGraph | Error::Numerical(_) | Error::NonFinite
        )
    }

    /// Process exit code: 2 for input errors, 3 for numerical degeneracy.
    pub fn exit_code(&self) -> u8 {
        if self.is_numerical() {
            3
        } else {
            2
        }
    }
}
