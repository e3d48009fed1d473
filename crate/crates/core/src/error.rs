use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit reports. Variants map onto the exit-code
/// contract of the command-line front end (all of them are "validation"
/// failures there; usage errors never reach this type).
#[derive(Debug, Error)]
pub enum Error {
    /// A wavelength (or other abscissa) outside a sampled curve.
    #[error("{what} {value} outside valid range [{lo}, {hi}]")]
    Range {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed text input with a 1-based line number.
    #[error("{source_name}: line {line}: {message}")]
    ParseLine {
        source_name: String,
        line: usize,
        message: String,
    },

    /// Malformed binary or JSON input with a byte offset.
    #[error("{source_name}: byte {offset}: {message}")]
    ParseOffset {
        source_name: String,
        offset: usize,
        message: String,
    },

    #[error("invalid layout: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Mismatched dimensions or pixel scale between two images.
    #[error("unit mismatch: {0}")]
    Unit(String),

    #[error("insufficient overlap: {0}")]
    Coverage(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("stitch quality too low for tiles {a:?} -> {b:?}: score {score:.4}")]
    StitchQuality {
        a: (usize, usize),
        b: (usize, usize),
        score: f64,
    },

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
