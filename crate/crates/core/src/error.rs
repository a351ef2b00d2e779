use thiserror::Error;

use crate::panel::{Cohort, Mode};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unbalanced panel: unit `{0}` is not observed exactly once in every period")]
    UnbalancedPanel(String),

    #[error("unit `{unit}` has a non-constant {attribute}")]
    NonConstantUnitAttribute { unit: String, attribute: &'static str },

    #[error("malformed value {value:?} in column `{column}` at data row {row}: {reason}")]
    MalformedValue {
        row: usize,
        column: String,
        value: String,
        reason: String,
    },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("mode mismatch: expected {expected:?}, dataset is {found:?}")]
    ModeMismatch { expected: Mode, found: Mode },

    #[error("empty cell (cohort {cohort}, group A={group})")]
    EmptyCell { cohort: Cohort, group: u8 },

    #[error("weak or zero first stage: |DDD of treatment| = {denominator:e} is below the relevance tolerance")]
    WeakOrZeroFirstStage { denominator: f64 },

    #[error("no control cohort available for the {0} control policy")]
    NoControlCohort(&'static str),

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("zero denominator in influence function")]
    ZeroDenominator,

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("bootstrap resampling failed: {0}")]
    ResampleDegenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),

    #[error("no compliers in {0}; the conditional parameter is undefined")]
    NoCompliers(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
