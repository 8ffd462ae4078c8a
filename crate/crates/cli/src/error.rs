use thiserror::Error;
use treetn_core::TtnError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Engine(#[from] TtnError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Process exit status: 2 for configuration problems, 3 for capability
    /// limits and unsupported combinations, 4 for non-finite numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Engine(e) => match e {
                TtnError::UnknownNode(_)
                | TtnError::DuplicateNode(_)
                | TtnError::UnknownSymbol(_)
                | TtnError::InvalidTree(_) => 2,
                TtnError::CapExceeded { .. } | TtnError::Unsupported(_) | TtnError::Incompatible(_) => 3,
                TtnError::NonFinite(_) => 4,
                _ => 1,
            },
            CliError::Io(_) | CliError::Json(_) => 1,
        }
    }
}
