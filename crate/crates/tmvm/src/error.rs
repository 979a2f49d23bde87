use std::path::PathBuf;

/// Errors of the file-facing layer. Each maps onto a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record `{record}`: blob {} not found", path.display())]
    MissingBlob { record: String, path: PathBuf },
    #[error("record `{record}`: blob {} holds {found} bytes, expected {expected} for {rows}x{cols} f32", path.display())]
    BlobLength {
        record: String,
        path: PathBuf,
        rows: usize,
        cols: usize,
        expected: u64,
        found: u64,
    },
    #[error("{}:{line}: {message}", path.display())]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
    #[error(transparent)]
    Core(#[from] tmvm_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// 0 is success; 1 validation or config, 2 numeric failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::MissingBlob { .. } => 3,
            Error::GradCheck(_) => 2,
            Error::Core(e) if e.is_numeric() => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
