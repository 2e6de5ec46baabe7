use std::io;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("relative fitness undefined for non-positive optimum {0}")]
    UndefinedRelativeFitness(f64),

    #[error("owner {owner}: privacy budget exhausted at round {round} (horizon {horizon})")]
    BudgetExhausted { owner: usize, round: usize, horizon: usize },

    #[error("owner {owner}: expected round {expected}, got {found}")]
    BadRound { owner: usize, expected: usize, found: usize },

    #[error("responses belong to different rounds")]
    MixedRounds,

    #[error("aggregation weights sum to {found}, expected {expected}")]
    WeightMismatch { expected: usize, found: usize },

    #[error("no response from owner {owner}")]
    MissingResponse { owner: usize },

    #[error("iterate diverged at round {round}")]
    Divergence { round: usize },

    #[error("linear system is singular")]
    Singular,

    #[error("owner record ranges overlap: {first} and {second}")]
    OverlappingPartitions { first: usize, second: usize },

    #[error("requested {requested} records but only {available} available")]
    PartitionTooLarge { requested: usize, available: usize },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {line} has {found} fields, expected {expected}")]
    RaggedRow { line: usize, expected: usize, found: usize },

    #[error("table has no data rows")]
    EmptyTable,

    #[error("cannot parse `{value}` in column `{column}` as a number")]
    NotNumeric { column: String, value: String },

    #[error("owner {owner} rejected round {round} as out of order")]
    RemoteBadRound { owner: usize, round: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, used by the CLI's error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptyDataset => "empty_dataset",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::UndefinedRelativeFitness(_) => "undefined_relative_fitness",
            Error::BudgetExhausted { .. } => "budget_exhausted",
            Error::BadRound { .. } => "bad_round",
            Error::MixedRounds => "mixed_rounds",
            Error::WeightMismatch { .. } => "weight_mismatch",
            Error::MissingResponse { .. } => "missing_response",
            Error::Divergence { .. } => "divergence",
            Error::Singular => "singular_system",
            Error::OverlappingPartitions { .. } => "overlapping_partitions",
            Error::PartitionTooLarge { .. } => "partition_too_large",
            Error::MissingColumn(_) => "missing_column",
            Error::RaggedRow { .. } => "ragged_row",
            Error::EmptyTable => "empty_table",
            Error::NotNumeric { .. } => "not_numeric",
            Error::RemoteBadRound { .. } => "bad_round",
            Error::Protocol(_) => "protocol",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
