use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsaError {
    #[error("bit string length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid bit string: {0}")]
    InvalidBitString(String),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("invalid key layout: {0}")]
    InvalidLayout(String),

    #[error("invalid qubit arguments: {0}")]
    InvalidQubits(String),

    #[error("{requested} qubits exceeds the dense limit of {limit}")]
    DenseLimitExceeded { requested: usize, limit: usize },

    #[error("state norm drifted to {norm} (tolerance {tolerance})")]
    NormDrift { norm: f64, tolerance: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("restart budget of {0} attempts exhausted")]
    RestartsExhausted(u32),

    #[error("protocol integrity violated: {0}")]
    Integrity(String),

    #[error("attack not applicable: {0}")]
    AttackInapplicable(String),

    #[error("batch rejected: {0}")]
    InvalidBatch(String),

    #[error("histogram needs {classes} classes, above the guard of {guard}")]
    HistogramGuard { classes: u128, guard: u128 },
}

impl QsaError {
    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            QsaError::LengthMismatch { .. } => "length_mismatch",
            QsaError::InvalidBitString(_) => "invalid_bit_string",
            QsaError::IndexOutOfRange { .. } => "index_out_of_range",
            QsaError::InvalidLayout(_) => "invalid_layout",
            QsaError::InvalidQubits(_) => "invalid_qubits",
            QsaError::DenseLimitExceeded { .. } => "dense_limit_exceeded",
            QsaError::NormDrift { .. } => "norm_drift",
            QsaError::InvalidConfig(_) => "invalid_config",
            QsaError::RestartsExhausted(_) => "restarts_exhausted",
            QsaError::Integrity(_) => "integrity",
            QsaError::AttackInapplicable(_) => "attack_inapplicable",
            QsaError::InvalidBatch(_) => "invalid_batch",
            QsaError::HistogramGuard { .. } => "histogram_guard",
        }
    }
}

pub type Result<T> = std::result::Result<T, QsaError>;
