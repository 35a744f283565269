use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid index pair ({i}, {j}) for dimension {m}")]
    InvalidIndex { i: usize, j: usize, m: usize },

    #[error("matrix is not unimodular: det = {det}")]
    NotUnimodular { det: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Cartan vector is not trace-zero (sum = {sum:e})")]
    NotTraceZero { sum: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("enumeration budget exceeded ({visited} candidates > {budget})")]
    EnumerationBudgetExceeded { visited: u64, budget: u64 },

    #[error("vectors are linearly dependent (Gram determinant {gram_det:e})")]
    DependentVectors { gram_det: f64 },

    #[error("reduction did not terminate within {cap} iterations")]
    IterationCapExceeded { cap: usize },

    #[error("threshold {threshold} is below the sampling noise floor {floor}")]
    ThresholdBelowNoise { threshold: f64, floor: f64 },

    #[error("segment {index} has an endpoint outside the thick part (depth {depth})")]
    NonThickEndpoint { index: usize, depth: f64 },

    #[error("atom budget exceeded: {requested} > {budget}")]
    AtomBudgetExceeded { requested: usize, budget: usize },

    #[error("sample budget exceeded: {requested} > {budget}")]
    SampleBudgetExceeded { requested: usize, budget: usize },

    #[error("eps = {eps} is below the sampling resolution (step {step})")]
    StepResolution { eps: f64, step: f64 },

    #[error("generators do not commute (commutator defect {defect:e})")]
    NonCommuting { defect: f64 },

    #[error("frame became ill-conditioned (condition number {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("cocycle norm is not finite at step {step}")]
    UntemperedBlowup { step: usize },

    #[error("memory budget exceeded: {0}")]
    MemoryBudget(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("schema version mismatch: {found} (expected {expected})")]
    SchemaMismatch { found: u32, expected: u32 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("experiment `{experiment}`: {source}")]
    Experiment {
        experiment: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
