use mawseo_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error("contract violation: {0}")]
    Contract(String),
    /// The instance cannot be attacked; callers drop it and move on.
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Training produced a non-finite loss; `checkpoint` is the retrieval
    /// network's last finite state.
    #[error("training diverged: {message}")]
    Diverged { message: String, checkpoint: String },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, AttackError>;

pub(crate) fn contract(msg: impl Into<String>) -> AttackError {
    AttackError::Contract(msg.into())
}

impl From<serde_json::Error> for AttackError {
    fn from(e: serde_json::Error) -> Self {
        AttackError::Checkpoint(e.to_string())
    }
}
