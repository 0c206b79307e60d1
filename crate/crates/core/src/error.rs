use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: axis `{axis}` expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("Langevin chain diverged at step {step} (|z| = {norm:.3e})")]
    Divergence { step: usize, norm: f64 },

    #[error("example {index}: {source}")]
    Example { index: usize, source: Box<Error> },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("invalid parse-graph document: {0}")]
    Schema(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_example(self, index: usize) -> Self {
        Error::Example {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

/// Failures when reading a serialized checkpoint. Each corruption mode is its own variant.
#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {found:?} (expected \"SGAO\")")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported checkpoint version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("checkpoint header truncated")]
    TruncatedHeader,

    #[error(
        "tensor `{tensor}` truncated: needs bytes {start}..{end}, blob section has {available}"
    )]
    Truncated {
        tensor: String,
        start: u64,
        end: u64,
        available: u64,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("checkpoint is missing tensor `{0}`")]
    MissingTensor(String),
}
