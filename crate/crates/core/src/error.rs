use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix entry at ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("SVD did not converge within {sweeps} sweeps")]
    NonConvergence { sweeps: usize },
    #[error("signal is empty")]
    EmptySignal,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("factor `{0}` has fewer than two observed levels")]
    DegenerateFactor(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("unknown term `{0}`")]
    UnknownTerm(String),

    #[error("residual sum of squares is zero (saturated model)")]
    ZeroResidual,
    #[error("requested {requested} components but the effect matrix has rank {rank}")]
    RankExceeded { requested: usize, rank: usize },
    #[error("variable {variable} has no observed values")]
    AllMissing { variable: usize },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("value {0} outside the domain (0, 1]")]
    DomainError(f64),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("sample ids do not match between files: {}", .0.join(", "))]
    IdMismatch(Vec<String>),
    #[error("row {row} has {found} values, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("nothing to plot")]
    EmptySeries,

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification, used by the command line front-end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Parse,
    Numeric,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. } | Error::IdMismatch(_) | Error::RaggedRows { .. } | Error::Csv(_) => {
                ErrorKind::Parse
            }
            Error::ConfigInvalid(_)
            | Error::DegenerateFactor(_)
            | Error::InvalidDesign(_)
            | Error::UnknownTerm(_)
            | Error::EmptySeries => ErrorKind::Config,
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Numeric,
        }
    }
}
