use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by how the CLI maps them to exit codes: usage
/// problems (2), data problems (3), and numerical failures (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error in {path} at row {row}, column {col}: {msg}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error(
        "conditioning error: right-hand matrix not factorizable; attempted jitter levels {0:?}"
    )]
    Conditioning(Vec<f64>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Shape(_) | Error::Parameter(_) => 2,
            Error::Data(_)
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::Metric(_)
            | Error::Io(_) => 3,
            Error::Conditioning(_) => 4,
        }
    }
}
