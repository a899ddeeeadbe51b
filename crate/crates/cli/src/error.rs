use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent experiment configuration.
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] mvpa_core::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(mvpa_core::Error::Io { .. } | mvpa_core::Error::MissingFile(_)) => "io",
            CliError::Core(_) => "data",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "io" => 3,
            _ => 2,
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}
