use thiserror::Error;

/// Errors produced by the change-detection library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected_width}x{expected_height}, found {found_width}x{found_height}")]
    Dimension {
        expected_width: u32,
        expected_height: u32,
        found_width: u32,
        found_height: u32,
    },

    #[error("corrupt mask: {0}")]
    CorruptMask(String),

    #[error("mask is empty")]
    EmptyMask,

    #[error("instance {0} has no pixels")]
    EmptyInstance(u32),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("legend error: {0}")]
    Legend(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("placement error: {0}")]
    Placement(String),

    #[error("export error: {0}")]
    Export(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dimension(expected: (u32, u32), found: (u32, u32)) -> Self {
        Error::Dimension {
            expected_width: expected.0,
            expected_height: expected.1,
            found_width: found.0,
            found_height: found.1,
        }
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}

/// Fails with a dimension error unless both shapes agree.
pub(crate) fn ensure_same_dims(expected: (u32, u32), found: (u32, u32)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::dimension(expected, found))
    }
}
