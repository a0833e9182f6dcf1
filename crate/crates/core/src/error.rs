use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {found})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty domain: {0}")]
    EmptyDomain(&'static str),

    #[error("non-finite entry in {what} at row {row}, column {col}")]
    NonFiniteEntry { what: &'static str, row: usize, col: usize },

    #[error("count must be at least one: {0}")]
    ZeroCount(&'static str),

    #[error("matrix is not symmetric positive definite: {0}")]
    SingularPoint(String),

    #[error("retraction left the SPD cone (min eigenvalue {min_eig:e}, floor {floor:e})")]
    StepTooLarge { min_eig: f64, floor: f64 },

    #[error("objective evaluated to a non-finite value ({0})")]
    NonFiniteObjective(f64),

    #[error("rank deficiency: requested {requested} components but only {usable} eigenpairs are usable")]
    RankDeficiency { requested: usize, usable: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(&'static str),

    #[error("source sample {0} is unlabeled")]
    UnlabeledSource(usize),

    #[error("anchor dimension {anchors} does not match data dimension {data}")]
    AnchorDimensionMismatch { anchors: usize, data: usize },

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("row {row} has {found} fields, expected {expected}")]
    InconsistentWidth { row: usize, expected: usize, found: usize },

    #[error("invalid kernel spec `{0}`")]
    InvalidKernelSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps the error with the pipeline stage it came from.
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
