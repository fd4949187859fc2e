use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("lookup out of bounds at position {position}: id {id} not below {limit}")]
    Lookup {
        position: usize,
        id: usize,
        limit: usize,
    },
    #[error("annotation error: {0}")]
    Annotation(String),
    #[error("degenerate attention: every re-weighted product is zero")]
    DegenerateAttention,
    #[error("undefined rate: {0}")]
    UndefinedRate(String),
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
