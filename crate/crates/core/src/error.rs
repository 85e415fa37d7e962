use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("record {row} has every analysis variable missing")]
    AllMissingRow { row: usize },
    #[error("record {row} is missing auxiliary variable `{var}`")]
    AuxiliaryMissing { row: usize, var: String },
    #[error("dataset has no fully observed record")]
    EmptyComplete,
    #[error("unknown missingness pattern: {0}")]
    UnknownPattern(String),
    #[error("prediction missing for row {row}, column `{column}`")]
    OracleMiss { row: usize, column: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("outcome value {value} at record {row} is not binary")]
    NonBinaryOutcome { row: usize, value: f64 },
    #[error("design matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    SingularDesign { condition: f64 },
    #[error("solver did not converge after {iterations} iterations (score norm {score_norm:.3e})")]
    NoConvergence { iterations: usize, score_norm: f64 },
    #[error("parameter norm {norm:.3e} exceeded the separation cap")]
    Separation { norm: f64 },
    #[error("bread matrix is singular")]
    SingularBread,
    #[error("weights must be strictly positive and finite (record {row}: {value})")]
    InvalidWeight { row: usize, value: f64 },
    #[error("sample has {have} records, at least {need} required")]
    InsufficientData { have: usize, need: usize },

    #[error("complete-pattern probability {pi_complete:.3e} is not above the floor")]
    InvalidSimplex { pi_complete: f64 },
    #[error("likelihood optimum lies on the simplex boundary")]
    LikelihoodBoundary,
    #[error("propensity spec error: {0}")]
    PropensitySpec(String),

    #[error("pattern {pattern} has {size} records, at least {need} required")]
    StratumTooSmall { pattern: usize, size: usize, need: usize },
    #[error("optimal-weight denominator is singular (condition number {condition:.3e})")]
    SingularDenominator { condition: f64 },
    #[error("negative variance {value:.3e} on coordinate {coordinate}")]
    NegativeVariance { coordinate: usize, value: f64 },
    #[error("jackknife replicate {replicate} failed: {source}")]
    Replicate { replicate: usize, source: Box<Error> },
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
    #[error("dataset has no outcome-only missingness pattern")]
    NoOutcomePattern,

    #[error("I/O error: {0}")]
    Io(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no successful replicates for method `{0}`")]
    NoSuccessfulReplicates(String),
}

impl Error {
    pub(crate) fn at(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
