use crate::Domain;

/// Errors raised by the calibration pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("areas intersect: `{0}` and `{1}`")]
    AreasIntersect(String, String),

    #[error("unknown area `{name}` (available: {available})")]
    UnknownArea { name: String, available: String },

    #[error("tile index ({row}, {col}) out of range for a {rows}x{cols} scatterer")]
    TileIndex {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("point is not on scatterer {scatterer}: {reason}")]
    OffScatterer { scatterer: usize, reason: String },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain mismatch: expected {expected}, found {found}")]
    DomainMismatch { expected: Domain, found: Domain },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }

    /// Builds a syntax error from a TOML decoding failure, recovering the
    /// 1-based line and column from the byte span.
    pub(crate) fn from_toml(text: &str, err: &toml::de::Error) -> Self {
        let (line, column) = match err.span() {
            Some(span) => line_col(text, span.start),
            None => (0, 0),
        };
        Error::Syntax {
            line,
            column,
            message: err.message().to_string(),
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let prefix = &text[..offset.min(text.len())];
    let line = prefix.matches('\n').count() + 1;
    let column = prefix.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}
