use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: expected {expected} bytes, found {actual}")]
    MalformedFile {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("sample value {value} exceeds {max} (frame {frame}, plane {plane})")]
    SampleRange {
        value: u32,
        max: u32,
        frame: usize,
        plane: &'static str,
    },

    #[error("block ({x}, {y}) {w}x{h} out of bounds for {width}x{height} plane")]
    Bounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid shift {shift} for coding bit depth {cbd}")]
    InvalidShift { shift: u32, cbd: u32 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("model integrity error: {0}")]
    ModelIntegrity(String),

    #[error("input too small: {0}")]
    InputTooSmall(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("failed to spawn `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },

    #[error("`{command}` exited with {status}: {output}")]
    CodecFailed {
        command: String,
        status: String,
        output: String,
    },

    #[error("`{command}` did not produce {path}")]
    MissingOutput { command: String, path: PathBuf },

    #[error("rate-distortion curve is not monotone: {0}")]
    NonMonotoneCurve(String),

    #[error("rate-distortion curves do not overlap: {0}")]
    NonOverlappingCurves(String),

    #[error("unusable source: {0}")]
    UnusableSource(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
