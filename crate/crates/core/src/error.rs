use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("threshold error: {0}")]
    Threshold(String),
    #[error("mitigation error: {0}")]
    Mitigation(String),
    #[error("explanation error: {0}")]
    Explanation(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("composition error: {0}")]
    Composition(String),
    #[error("compatibility error: {0}")]
    Compatibility(String),
    #[error("report error: {0}")]
    Report(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the configuration rather than by a stage at run time.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Composition(_) | Error::Compatibility(_) | Error::Schema(_)
        )
    }
}
