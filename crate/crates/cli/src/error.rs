use fdrlab::error::Error;

/// Exit-code classes: configuration errors exit 2, runtime failures 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error in `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { name, reason } => CliError::config(name, reason),
            Error::Unsupported(reason) => CliError::config("method", reason),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Name the offending key of a serde_json schema error when it mentions one.
pub fn json_error(context: &str, e: &serde_json::Error) -> CliError {
    let text = e.to_string();
    let key = text
        .split('`')
        .nth(1)
        .filter(|_| text.contains("field"))
        .unwrap_or(context)
        .to_string();
    CliError::config(key, text)
}

pub type CliResult<T> = std::result::Result<T, CliError>;
