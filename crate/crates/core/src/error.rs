use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin quantum number {0}: 2s must be a non-negative integer and s <= 20")]
    InvalidSpin(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical contract violated: {0}")]
    NumericalContract(String),

    #[error("point-dipole singularity: {0}")]
    Singularity(String),

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("Schrieffer-Wolff validity: state {state} and {partner} are separated by {gap:.3e} rad/us, below the gap floor {floor:.3e}")]
    SwValidity {
        state: usize,
        partner: usize,
        gap: f64,
        floor: f64,
    },

    #[error("cluster family not closed: sub-cluster {missing:?} of {cluster:?} is missing")]
    Closure {
        cluster: Vec<usize>,
        missing: Vec<usize>,
    },

    #[error("exact evaluation needs a {dim}-dimensional bath space, above the limit {limit}")]
    DimensionGuard { dim: usize, limit: usize },

    #[error("bath generation failed: {0}")]
    Generation(String),

    #[error("quadrature did not converge: estimated error {achieved:.3e} above tolerance {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
