use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("non-finite value {value} at node {node} ({x}, {y})")]
    NonFiniteNode { node: usize, x: f64, y: f64, value: f64 },
    #[error("non-finite intermediate in {layer}")]
    NonFiniteLayer { layer: String },
    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("conjugate gradients stalled after {iterations} iterations (relative residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("unknown name: {0}")]
    UnknownName(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
