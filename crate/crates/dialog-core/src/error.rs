use thiserror::Error;

/// Errors produced anywhere in the pipeline: data loading, model
/// contracts, training and report emission.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema violation in dialogue '{dialogue}': {field}: {message}")]
    Schema {
        dialogue: String,
        field: String,
        message: String,
    },

    #[error("label value not in ontology: ({domain}, {slot}, \"{value}\")")]
    UnknownLabel {
        domain: String,
        slot: String,
        value: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("database query error: {0}")]
    Query(String),

    #[error("generation error: missing entity field for slot '{0}'")]
    Generation(String),

    #[error("non-finite loss in epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("gradient check error: {0}")]
    GradCheck(String),

    #[error("report error: {0}")]
    Report(String),
}

pub type Result<T> = std::result::Result<T, Error>;
