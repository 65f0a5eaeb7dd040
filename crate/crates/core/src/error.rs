use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("alphabet size must be in 2..=256, got {0}")]
    InvalidAlphabet(usize),

    #[error("alphabet mismatch: {left} vs {right}")]
    AlphabetMismatch { left: usize, right: usize },

    #[error("symbol {symbol} out of range for alphabet of size {size}")]
    SymbolOutOfRange { symbol: usize, size: usize },

    #[error("pattern of length {pattern} does not fit a window of {window} symbols")]
    PatternTooLong { pattern: usize, window: usize },

    #[error("sequence too short: need at least {needed} symbols, got {got}")]
    SequenceTooShort { needed: usize, got: usize },

    #[error("no context of the tree matches history {0:?}")]
    NoMatchingContext(Vec<u8>),

    #[error("invalid context tree: {0}")]
    InvalidTree(String),

    #[error("transitions unset for context {0:?}")]
    UnsetTransitions(Vec<u8>),

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("product contamination over {0} symbols needs an explicit closed operation table")]
    ProductClosure(usize),

    #[error("observation at step {step} is impossible under the current parameters")]
    ImpossibleObservation { step: usize },

    #[error("chain is reducible: {0} closed classes")]
    Reducible(usize),

    #[error("power iteration did not converge in {0} iterations")]
    NoConvergence(usize),

    #[error("oracle guard: {0}")]
    OracleGuard(String),

    #[error("all restarts failed: {0}")]
    AllRestartsFailed(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
