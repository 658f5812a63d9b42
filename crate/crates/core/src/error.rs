use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid topology or schedule parameters.
    #[error("construction error: {0}")]
    Construction(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("data error at row {row}: {msg}")]
    DataRow { row: usize, msg: String },

    /// Sampler state and inputs disagree on shape.
    #[error("state error: {0}")]
    State(String),

    #[error("sampler configuration error: {0}")]
    Config(String),

    #[error("metric error: {0}")]
    Metric(String),

    /// A theory formula was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
