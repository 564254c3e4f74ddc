//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A file could not be read or written.
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file is not valid for its declared format (bad header, truncated body).
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// The file format is recognized but the encoding is not supported.
    #[error("unsupported format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    /// Bad configuration: invalid parameter combinations, unknown keys,
    /// missing profiles, mismatched sample rates between inputs.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input data (bad TSV line, bad list line, bad annotation).
    #[error("parse error in {path} line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// Signal shorter than one analysis window.
    #[error("signal too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },

    /// STFT/mask geometry mismatch.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Input that makes the requested quantity undefined (zero-energy audio,
    /// zero-norm embedding, zero reference signal).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Not enough enrollment audio for a speaker profile.
    #[error("enrollment error for speaker {speaker}: have {have_s:.2} s, need {need_s:.2} s")]
    Enrollment {
        speaker: String,
        have_s: f64,
        need_s: f64,
    },

    /// The pairing constraints cannot be satisfied.
    #[error("unsatisfiable pairing: {0}")]
    Unsatisfiable(String),

    /// An utterance reference could not be resolved to audio.
    #[error("missing audio for utterance {0}")]
    MissingAudio(String),

    /// A path did not match any channel-map rule.
    #[error("no channel-map rule applies to {0}")]
    Mapping(String),

    /// Permutation search limit exceeded.
    #[error("source count {0} exceeds the permutation search limit of {1}")]
    SizeLimit(usize, usize),
}

impl Error {
    /// An I/O error tagged with the offending path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// A malformed-file error tagged with the offending path.
    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
