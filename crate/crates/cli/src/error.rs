use prnu_core::Error as CoreError;

/// CLI failures, grouped by exit code.
#[derive(thiserror::Error, Debug)]
pub enum CliError {
    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Data(_) => 3,
            Self::Numeric(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::InvalidParameter { name, reason } => Self::config(config_key(name), reason.clone()),
            CoreError::Degenerate(_) | CoreError::NonFinite(_) | CoreError::UnreachableTarget => {
                Self::Numeric(e.to_string())
            }
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Data(e.to_string())
    }
}

/// Maps a core parameter name to the config key that sets it.
fn config_key(name: &str) -> String {
    match name {
        "N" => "attack.n".into(),
        "r" => "attack.r".into(),
        "l" | "block_side" => "attack.l".into(),
        "A" | "target_psnr" => "attack.a".into(),
        "predenoise_sigma" => "attack.predenoise_sigma".into(),
        "forgeries" => "triangle.forgeries".into(),
        "null_candidates" => "triangle.null_candidates".into(),
        "k" => "pooled.k".into(),
        "repetitions" => "pooled.repetitions".into(),
        "probability" => "pfa".into(),
        "points" => "triangle.fit_count".into(),
        "sigma" | "levels" | "window_sides" => format!("detector.{name}"),
        "alice_pool" | "sigma_k" | "contrast" | "eve_cameras" | "negative_cameras" | "read_noise_spread"
        | "width/height" => format!("dataset.{name}"),
        other => other.into(),
    }
}
