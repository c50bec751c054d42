use std::path::PathBuf;

/// Errors raised anywhere in the analysis chain.
///
/// Each variant belongs to one category of the command-line exit-code
/// taxonomy, see [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error in column `{column}`: {reason}")]
    Schema { column: String, reason: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("data error at row {row}: {reason}")]
    DataAtRow { row: usize, reason: String },

    #[error("range error: {0}")]
    Range(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("filter design error: {0}")]
    Design(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("type error: {0}")]
    Type(String),

    #[error("no dominant mode: {0}")]
    NoDominantMode(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema { .. } => "schema",
            Error::Data(_) | Error::DataAtRow { .. } => "data",
            Error::Range(_) => "range",
            Error::Validation(_) => "validation",
            Error::Design(_) => "design",
            Error::Length(_) => "length",
            Error::Type(_) => "type",
            Error::NoDominantMode(_) => "no_dominant_mode",
            Error::Numeric(_) => "numeric",
            Error::Conditioning(_) => "conditioning",
            Error::Scenario(_) => "scenario",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// Process exit code: 2 no dominant mode, 3 numeric/conditioning,
    /// 4 data problems, 5 invalid parameters.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NoDominantMode(_) => 2,
            Error::Numeric(_) | Error::Conditioning(_) => 3,
            Error::Schema { .. }
            | Error::Data(_)
            | Error::DataAtRow { .. }
            | Error::Range(_)
            | Error::Length(_)
            | Error::Type(_)
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_) => 4,
            Error::Validation(_) | Error::Design(_) | Error::Scenario(_) => 5,
        }
    }
}
