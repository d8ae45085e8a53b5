use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("subsystem index {index} out of range for {count} subsystems")]
    SubsystemOutOfRange { index: usize, count: usize },

    #[error("empty subsystem selection")]
    EmptySelection,

    #[error("joint dimension 2^{qubits} exceeds the exact-mode cap; use the analytic product formula")]
    DimensionCap { qubits: usize },

    #[error("insufficient usable samples for a fit: {found} (need {needed})")]
    InsufficientData { found: usize, needed: usize },

    #[error("invalid configuration: field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("channel is not completely positive (min eigenvalue {min_eigenvalue:.3e})")]
    NotCompletelyPositive { min_eigenvalue: f64 },

    #[error("channel is not trace preserving (deviation {deviation:.3e})")]
    NotTracePreserving { deviation: f64 },

    #[error("quantum Markov condition violated: factors of `{first}` and `{second}` do not commute (norm {norm:.3e})")]
    QmcViolation { first: String, second: String, norm: f64 },

    #[error("invalid causal model: {0}")]
    InvalidModel(String),

    #[error("instrument for node `{node}` setting `{setting}` is not trace preserving (deviation {deviation:.3e})")]
    InstrumentNotNormalized {
        node: String,
        setting: String,
        deviation: f64,
    },

    #[error("probabilities sum to {sum} instead of 1")]
    NotNormalized { sum: f64 },

    #[error("node sets must be disjoint: `{0}` appears twice")]
    OverlappingSets(String),

    #[error("distribution is not Markov with respect to the DAG")]
    NotMarkov,

    #[error("conditioning on a zero-probability event")]
    ZeroProbability,

    #[error("screening set {0:?} does not screen off the correlation")]
    ScreeningFailed(Vec<String>),

    #[error("empty trace")]
    EmptyTrace,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
