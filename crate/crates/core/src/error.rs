use std::path::PathBuf;

use thiserror::Error;

use crate::constitutive::StructuralReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("derivative order {0} unsupported (expected 1..=3)")]
    UnsupportedOrder(usize),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("law `{label}` fails the structural audit (min G = {min_g:e}, min G + 2G's = {min_coercive:e})", label = .0.label, min_g = .0.min_g, min_coercive = .0.min_coercive)]
    Inadmissible(Box<StructuralReport>),

    #[error("fields live on different grids (n = {left} vs n = {right})")]
    GridMismatch { left: usize, right: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite velocity at step {step} (t = {t})", step = .0.step, t = .0.t)]
    BlowUp(Box<crate::solver::BlowUp>),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
