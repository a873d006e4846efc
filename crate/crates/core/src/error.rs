use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite for any jitter in the schedule (last tried {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("non-finite gradient at training step {step}")]
    NonFiniteTrainingStep { step: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in input tensor")]
    NonFinite,

    #[error("invalid Landau coefficients a1={a1}, a11={a11} (need a1 < 0 < a11)")]
    InvalidCoefficients { a1: f64, a11: f64 },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("numerical blow-up at sample {sample}: |p| = {magnitude}")]
    NumericalBlowup { sample: usize, magnitude: f64 },

    #[error("trace too short: need at least {needed} samples, have {got}")]
    InsufficientTrace { needed: usize, got: usize },

    #[error("degenerate targets: standard deviation {0:e}")]
    DegenerateTargets(f64),

    #[error("normalization statistics missing for mechanism `{0}`")]
    MissingStats(String),

    #[error("no unlabeled candidate left to select")]
    SelectionExhausted,

    #[error("no reference input supplied for mechanism `{0}`")]
    MissingReference(String),

    #[error("expected {expected} anchors, got {got}")]
    AnchorCountMismatch { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("singular regression: {0}")]
    SingularRegression(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
