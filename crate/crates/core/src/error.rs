use thiserror::Error;

/// Errors raised by the symbolic-dynamics toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no symbol survives essentialization")]
    EmptySystem,

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("{what}: {count} exceeds the configured cap of {cap}")]
    Overflow {
        what: &'static str,
        count: usize,
        cap: usize,
    },

    #[error("inadmissible word: transition {from} -> {to} at position {position}")]
    Inadmissible {
        from: usize,
        to: usize,
        position: usize,
    },

    #[error("kernel row {row} sums to {sum} instead of 1")]
    NotStochastic { row: usize, sum: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("level {level} is not strictly inside ({lo}, {hi})")]
    LevelOutsideInterior { level: f64, lo: f64, hi: f64 },

    #[error("rotation set is the single point {value}; the spectrum is defined only there")]
    DegenerateDirection { value: f64 },

    #[error("denominator potential must be positive (minimum block value {min})")]
    PsiNotPositive { min: f64 },

    #[error("input {index} does not straddle the target in coordinate {coordinate}")]
    StraddlingViolated { index: usize, coordinate: usize },

    #[error("target (level {level}, entropy {entropy}) is not interior: {reason}")]
    NotInterior {
        level: f64,
        entropy: f64,
        reason: String,
    },

    #[error("entropy floor {floor} stays above the target {target} up to word length {word_length}")]
    FloorNotReached {
        floor: f64,
        target: f64,
        word_length: usize,
    },

    #[error("marker cylinder has zero probability under the measure")]
    MarkerIncompatible,

    #[error("word {word} cannot be glued: {reason}")]
    GluingInadmissible { word: String, reason: String },

    #[error("certificate failed: {0}")]
    CertificateFailed(String),

    #[error("empty measure set")]
    EmptySet,

    #[error("bundle mismatch: {0}")]
    BundleMismatch(String),

    #[error("{line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{line}:{column}: block `{block}` references unknown {kind} `{name}`")]
    Reference {
        block: String,
        kind: &'static str,
        name: String,
        line: usize,
        column: usize,
    },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Short stable identifier used in JSON error payloads.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptySystem => "EmptySystem",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::Overflow { .. } => "Overflow",
            Error::Inadmissible { .. } => "Inadmissible",
            Error::NotStochastic { .. } => "NotStochastic",
            Error::InvalidInput(_) => "InvalidInput",
            Error::LevelOutsideInterior { .. } => "LevelOutsideInterior",
            Error::DegenerateDirection { .. } => "DegenerateDirection",
            Error::PsiNotPositive { .. } => "PsiNotPositive",
            Error::StraddlingViolated { .. } => "StraddlingViolated",
            Error::NotInterior { .. } => "NotInterior",
            Error::FloorNotReached { .. } => "FloorNotReached",
            Error::MarkerIncompatible => "MarkerIncompatible",
            Error::GluingInadmissible { .. } => "GluingInadmissible",
            Error::CertificateFailed(_) => "CertificateFailed",
            Error::EmptySet => "EmptySet",
            Error::BundleMismatch(_) => "BundleMismatch",
            Error::Parse { .. } => "ParseError",
            Error::Reference { .. } => "ReferenceError",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
