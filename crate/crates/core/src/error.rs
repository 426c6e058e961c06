use thiserror::Error;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Estimation,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("treatment value `{value}` at row {row} is not binary")]
    NonBinaryTreatment { row: usize, value: String },
    #[error("non-finite or unparsable value in column `{column}` at row {row}")]
    NonFiniteValue { row: usize, column: String },
    #[error("missing cell in column `{column}` at row {row}")]
    MissingValue { row: usize, column: String },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("too few rows: got {got}, need at least {need}")]
    TooFewRows { got: usize, need: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no features: {0}")]
    NoFeatures(String),
    #[error("feature set is empty")]
    EmptyFeatureSet,
    #[error("feature index {index} out of range for p = {p}")]
    FeatureOutOfRange { index: usize, p: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("row {0} has no out-of-bag trees")]
    NoOobTrees(usize),
    #[error("centered treatment has zero variance")]
    ZeroTreatmentVariance,
    #[error("all leaves are empty for the query point")]
    EmptyLeafEverywhere,
    #[error("degenerate denominator: no treatment variation near the query")]
    DegenerateDenominator,
    #[error("treatment effect estimates are homogeneous (variance {0:e})")]
    HomogeneousEffect(f64),
    #[error("no evaluation rows with out-of-bag coverage in every forest")]
    NoEvaluationRows,
    #[error("monte-carlo treatment effect variance is zero")]
    ZeroVariance,
    #[error("unknown column `{0}` in group definition")]
    UnknownGroupColumn(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidParams(_) | UnknownGroupColumn(_) | Json(_) => ErrorKind::Config,
            MissingColumn(_) | NonBinaryTreatment { .. } | NonFiniteValue { .. }
            | MissingValue { .. } | EmptyFile | TooFewRows { .. } | ShapeMismatch(_)
            | NoFeatures(_) | EmptyFeatureSet | FeatureOutOfRange { .. } | Io(_) | Csv(_) => {
                ErrorKind::Data
            }
            NoOobTrees(_) | ZeroTreatmentVariance | EmptyLeafEverywhere
            | DegenerateDenominator | HomogeneousEffect(_) | NoEvaluationRows | ZeroVariance => {
                ErrorKind::Estimation
            }
        }
    }

    /// Short stable identifier for machine-readable error lines.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            MissingColumn(_) => "MissingColumn",
            NonBinaryTreatment { .. } => "NonBinaryTreatment",
            NonFiniteValue { .. } => "NonFiniteValue",
            MissingValue { .. } => "MissingValue",
            EmptyFile => "EmptyFile",
            TooFewRows { .. } => "TooFewRows",
            ShapeMismatch(_) => "ShapeMismatch",
            NoFeatures(_) => "NoFeatures",
            EmptyFeatureSet => "EmptyFeatureSet",
            FeatureOutOfRange { .. } => "FeatureOutOfRange",
            InvalidParams(_) => "InvalidParams",
            NoOobTrees(_) => "NoOobTrees",
            ZeroTreatmentVariance => "ZeroTreatmentVariance",
            EmptyLeafEverywhere => "EmptyLeafEverywhere",
            DegenerateDenominator => "DegenerateDenominator",
            HomogeneousEffect(_) => "HomogeneousEffect",
            NoEvaluationRows => "NoEvaluationRows",
            ZeroVariance => "ZeroVariance",
            UnknownGroupColumn(_) => "UnknownGroupColumn",
            Io(_) => "Io",
            Csv(_) => "Csv",
            Json(_) => "Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
