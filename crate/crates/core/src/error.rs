use thiserror::Error;

use crate::attention::DumpError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no attention map for layer {layer}, step {step}")]
    MissingMap { layer: u32, step: u32 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Dump(#[from] DumpError),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad arguments or inconsistent inputs, as
    /// opposed to unreadable files or malformed bytes.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::DimensionMismatch(_)
                | Error::MissingMap { .. }
                | Error::Degenerate(_)
        )
    }
}
