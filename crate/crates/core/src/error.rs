use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index {index} out of range 0..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("exponential overflow at coordinate {index} (value {value})")]
    Overflow { index: usize, value: f64 },

    #[error("invalid parameters: {0}")]
    Parameter(String),

    #[error("configuration is singular: minimal gap {min_gap:e} below floor {floor:e}")]
    Singular { min_gap: f64, floor: f64 },

    #[error("finite-difference step {h:e} too large for minimal gap {min_gap:e}; use a smaller step")]
    StepTooLarge { h: f64, min_gap: f64 },

    #[error("SDE step failed at t = {time}: substep depth exhausted at state {state:?}")]
    StepFailure { time: f64, state: Vec<f64> },

    #[error("path {stream} failed: {source}")]
    PathFailure {
        stream: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("ODE step collapsed at t = {time} (h = {h:e})")]
    StepCollapse { time: f64, h: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("outside domain: {0}")]
    Domain(String),

    #[error("bad record: {0}")]
    Record(String),
}
