use thiserror::Error;

pub type Result<T, E = StudyError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("ratings belong to different topics or the same partner: {0}")]
    MismatchedTopic(String),
    #[error("rating dimension {value} is outside 1..=7")]
    RatingOutOfRange { value: u8 },
    #[error("only {found} topics fall inside the band, {needed} needed")]
    InsufficientTopics { found: usize, needed: usize },
    #[error("questionnaire item {0} is missing")]
    MissingItem(String),
    #[error("Likert value {value} for {item} is outside 1..=7")]
    LikertOutOfRange { item: String, value: u8 },
    #[error("total-score variance is zero")]
    ZeroTotalVariance,
    #[error("degenerate input shape: {0}")]
    DegenerateShape(String),
    #[error("invalid p-value {0}")]
    InvalidP(f64),
    #[error("{m} comparisons cannot cover {count} p-values")]
    TooFewComparisons { m: usize, count: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("unknown condition {0:?}")]
    UnknownCondition(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
