use thiserror::Error;

/// Errors surfaced by the lab.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid bounding box {0:?}")]
    InvalidBBox([i32; 4]),

    #[error("token {token} is not legal at slot {slot}")]
    IllegalToken { token: usize, slot: &'static str },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed record: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Io(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
