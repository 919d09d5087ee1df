use thiserror::Error;

/// Everything that can go wrong while building or querying a model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("N_init = {requested} overflows 64-bit matrix entries; the maximal supported N_init is {max}")]
    PowerOverflow { requested: u32, max: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no point on the line within {tol} of the target after {windings} windings (best distance {best})")]
    WindingCapReached { tol: f64, windings: u64, best: f64 },

    #[error("gap rule removes total length {sum} which is not below the base length {length}")]
    GapSumTooLarge { sum: f64, length: f64 },

    #[error("gap rule is not strictly decreasing at step {step}")]
    GapRuleNotDecreasing { step: usize },

    #[error("point {x} lies outside the interval [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("word of length {len} exceeds realized depth {depth}")]
    WordTooLong { len: usize, depth: usize },

    #[error("extension margin too small: need at least {required}, have {available}")]
    MarginTooSmall { required: f64, available: f64 },

    #[error("geometry precondition failed: {0}")]
    Geometry(String),

    #[error("construction check failed: {0}")]
    Construction(String),

    #[error("root not bracketed on [{lo}, {hi}] for target {target}")]
    NotBracketed { lo: f64, hi: f64, target: f64 },

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("artifact version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
