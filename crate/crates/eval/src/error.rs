use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("missing artifact `{name}` in {dir}; run `{producer}` first")]
    MissingArtifact { name: String, dir: PathBuf, producer: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] mawseo_core::CoreError),
    #[error(transparent)]
    Target(#[from] mawseo_target::TargetError),
    #[error(transparent)]
    Attack(#[from] mawseo_attack::AttackError),
    #[error(transparent)]
    Defense(#[from] mawseo_defense::DefenseError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub(crate) fn contract(msg: impl Into<String>) -> EvalError {
    EvalError::Contract(msg.into())
}
