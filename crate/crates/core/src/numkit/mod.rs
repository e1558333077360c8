//! Dense linear algebra, MLPs with manual backpropagation, Adam, and
//! finite-difference gradient oracles.

mod adam;
pub mod checkpoint;
mod finite_diff;
mod matrix;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use finite_diff::{finite_diff_grad, relative_error};
pub use matrix::{axpy, dot, norm, DenseMatrix};
pub use mlp::{
    sigmoid, Activation, ForwardCache, InitScale, Layer, Mlp, OutputTransform, LEAKY_SLOPE,
    SIGMOID_EPS,
};

#[derive(Debug, thiserror::Error)]
pub enum NumError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("matrix is singular")]
    Singular,
    #[error("finite differences produced non-finite values at coordinates {coords:?}")]
    FiniteDiff { coords: Vec<usize> },
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
