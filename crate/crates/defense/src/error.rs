use mawseo_core::CoreError;
use mawseo_target::TargetError;

#[derive(Debug, thiserror::Error)]
pub enum DefenseError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("malformed triplet file at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(CoreError),
    #[error(transparent)]
    Target(#[from] TargetError),
}

pub type Result<T> = std::result::Result<T, DefenseError>;

pub(crate) fn contract(msg: impl Into<String>) -> DefenseError {
    DefenseError::Contract(msg.into())
}

impl From<CoreError> for DefenseError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Contract(m) => DefenseError::Contract(m),
            other => DefenseError::Core(other),
        }
    }
}
