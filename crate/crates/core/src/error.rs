//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

/// Failure categories. The CLI maps these onto process exit codes: numerical
/// failures exit 1, everything else that reaches `main` exits 2.
#[derive(Debug, Error)]
pub enum Error {
    /// A mathematical precondition on an argument does not hold.
    #[error("domain error: {0}")]
    Domain(String),

    /// Arguments are individually valid but mutually inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A computation left the representable or convergent regime.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The request exceeds a documented implementation limit.
    #[error("capability error: {0}")]
    Capability(String),

    /// A file could not be parsed; names the file and the offending line.
    #[error("parse error in {path}, line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
