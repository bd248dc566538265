use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid record{}: {reason}", id_suffix(.id))]
    InvalidRecord { id: Option<String>, reason: String },

    #[error("record `{0}` has no true label")]
    Unlabeled(String),

    #[error("unlabeled records: {}", .0.join(", "))]
    UnlabeledRecords(Vec<String>),

    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },

    #[error("invalid superclass map: {0}")]
    InvalidMap(String),

    #[error("shape mismatch: expected {expected} features, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty training set: {0}")]
    EmptyTrainingSet(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("superclass flip is not applicable: {0}")]
    PolicyInapplicable(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("truncated or empty model stream")]
    Truncated,

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("undefined metric input: {0}")]
    UndefinedMetric(String),

    #[error("stratum too small to split: {0}")]
    StratumTooSmall(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn id_suffix(id: &Option<String>) -> String {
    match id {
        Some(id) => format!(" `{id}`"),
        None => String::new(),
    }
}
