use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid corpus: {0}")]
    Corpus(String),
    #[error("dangling reference: text `{text_id}` points at unknown video `{video_id}`")]
    DanglingVideo { text_id: String, video_id: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }

    /// True for failures of the numerical kind (non-finite losses and the like).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
