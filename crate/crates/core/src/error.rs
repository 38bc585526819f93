use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("matrix is singular to working precision (pivot {pivot})")]
    Singular { pivot: usize },

    #[error("solution failed residual certification: relative residual {residual:e} > {threshold:e}")]
    Certification { residual: f64, threshold: f64 },

    #[error("coefficient field violates its declared bounds: {0}")]
    Coefficient(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("problem precondition violated: {0}")]
    Spec(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("region {0} contains no elements")]
    EmptyRegion(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
