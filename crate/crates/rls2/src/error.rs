use thiserror::Error;

/// Errors produced by the rls2 library.
#[derive(Debug, Error)]
pub enum Rls2Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },
    #[error("target column '{0}' not found")]
    MissingTarget(String),
    #[error("dataset is empty after cleaning")]
    EmptyDataset,
    #[error("binary task requires exactly two label values, found {0}")]
    BadBinaryLabels(usize),
    #[error("train fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("resulting train split is empty")]
    EmptyTrainSplit,
    #[error("fold count must satisfy 2 <= k <= {n}, got {k}")]
    BadFoldCount { k: usize, n: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid kernel spec: {0}")]
    InvalidSpec(String),
    #[error("kernel spec file, line {line}: {msg}")]
    SpecParse { line: usize, msg: String },
    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),
    #[error("every basis kernel was dropped as degenerate")]
    AllKernelsDegenerate,
    #[error("scaling rule error: {0}")]
    ScalingRule(String),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("regularization parameter must be positive, got {0}")]
    BadLambda(f64),
    #[error("lambda grid must be strictly decreasing and positive")]
    BadLambdaGrid,
    #[error("conjugate gradient exceeded {0} iterations; the system matrix is likely corrupted")]
    CgIterationCap(usize),
    #[error("fit at lambda={lambda} failed: {source}")]
    PathFit {
        lambda: f64,
        #[source]
        source: Box<Rls2Error>,
    },
    #[error("bank contains non-linear kernel specs; expected linear_feature kernels only")]
    NotLinearBank,
    #[error("system is singular at lambda=0")]
    SingularSystem,
    #[error("operation requires a {expected} task, got {found}")]
    TaskMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("class '{0}' is absent from training data")]
    MissingClass(String),
    #[error("model file version {found} is not supported (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },
    #[error("model file is corrupt: {0}")]
    ModelFormat(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Rls2Error>;
