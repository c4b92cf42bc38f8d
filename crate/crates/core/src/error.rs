use crate::panel::MonthIndex;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: missing column `{column}`")]
    Schema { column: String },

    #[error("line {line}: cannot parse `{value}` in column `{column}`")]
    Parse { line: u64, column: String, value: String },

    #[error("line {line}: duplicate row for ({date}, {ticker})")]
    DuplicateRow { line: u64, date: String, ticker: String },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("month {0} is outside the panel")]
    MonthOutOfRange(MonthIndex),

    #[error("degenerate synthetic spec: {0}")]
    DegenerateSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cross-section cannot be imputed: every value is missing")]
    Unimputable,

    #[error("constant vector: standard deviation is zero")]
    ConstantVector,

    #[error("underdetermined regression: {rows} rows for {cols} columns")]
    Underdetermined { rows: usize, cols: usize },

    #[error("insufficient history: need {required}, have {available}")]
    InsufficientHistory { required: usize, available: usize },

    #[error("information ratio undefined: excess series has zero dispersion")]
    UndefinedIr,

    #[error("compound growth undefined: {0}")]
    UndefinedGrowth(String),

    #[error("beta undefined: benchmark has zero variance")]
    UndefinedBeta,

    #[error("correlation undefined: input is constant")]
    UndefinedCorrelation,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("fold error: {0}")]
    Fold(String),

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("feature mismatch; offending names: {}", offending.join(", "))]
    FeatureMismatch { offending: Vec<String> },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("arity error: {0}")]
    Arity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable tag for machine-parseable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema { .. } => "schema",
            Error::Parse { .. } => "parse",
            Error::DuplicateRow { .. } => "duplicate-row",
            Error::Structure(_) => "structure",
            Error::MonthOutOfRange(_) => "range",
            Error::DegenerateSpec(_) => "degenerate-spec",
            Error::InvalidInput(_) => "invalid-input",
            Error::Unimputable => "unimputable",
            Error::ConstantVector => "constant-vector",
            Error::Underdetermined { .. } => "underdetermined",
            Error::InsufficientHistory { .. } => "insufficient-history",
            Error::UndefinedIr => "undefined-ir",
            Error::UndefinedGrowth(_) => "undefined-growth",
            Error::UndefinedBeta => "undefined-beta",
            Error::UndefinedCorrelation => "undefined-correlation",
            Error::Precondition(_) => "precondition",
            Error::Fold(_) => "fold",
            Error::Divergence { .. } => "divergence",
            Error::FeatureMismatch { .. } => "feature-mismatch",
            Error::Alignment(_) => "alignment",
            Error::Arity(_) => "arity",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
