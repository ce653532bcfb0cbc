//! Inference engine, RepConv folding and analytic cost model for the
//! MFDNet family of mobile-friendly denoising networks.
//!
//! * [`ops`]: NCHW kernels (convolution, activations, Haar, resampling)
//! * [`graph`]: baseline and MFDNet builders, validation and execution
//! * [`reparam`]: exact folding of RepConv branches into 3x3 convolutions
//! * [`cost`]: MACs / parameter / memory-traffic estimates
//! * [`weights`]: weight stores, the MFDW file format, seeded init
//! * [`cli`]: the `mfdnet` command-line front end

pub mod cli;
pub mod cost;
pub mod graph;
pub mod image;
pub mod ops;
pub mod reparam;
pub mod tensor;
pub mod weights;

pub use tensor::{Shape, Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Fold(#[from] reparam::FoldError),
    #[error(transparent)]
    Weights(#[from] weights::MfdwError),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
