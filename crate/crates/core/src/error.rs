//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or arguments (bad probabilities, empty grids,
    /// inconsistent dimensions, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Operation undefined for the given input (G < 2 separability, label
    /// out of range, cluster count exceeding sample size, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input data. `row`/`col` are 1-based data coordinates
    /// (header line excluded).
    #[error("ingestion error in {path} at row {row}, column {col}: {msg}")]
    Ingest {
        path: String,
        row: usize,
        col: usize,
        msg: String,
    },

    /// Design matrix numerically singular; `columns` are the 0-based column
    /// indices implicated in the near-null space.
    #[error("singular design (condition number {cond:.3e}): offending columns {columns:?}")]
    SingularDesign { cond: f64, columns: Vec<String> },

    /// Iterative solver failed to converge.
    #[error("no convergence after {sweeps} sweeps: max coefficient change {residual:.3e}")]
    NoConvergence { sweeps: usize, residual: f64 },

    /// Nodewise regression found a column almost perfectly explained by the
    /// others.
    #[error("near-duplicate column {column}: nodewise residual variance {tau_sq:.3e}")]
    NearDuplicateColumn { column: usize, tau_sq: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 configuration, 3 data/ingestion,
    /// 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) => 2,
            Error::Ingest { .. } | Error::Io(_) => 3,
            Error::SingularDesign { .. }
            | Error::NoConvergence { .. }
            | Error::NearDuplicateColumn { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
