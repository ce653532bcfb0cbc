//! Deterministic NCHW kernels. All functions are pure.

mod activation;
mod conv;
mod elementwise;
mod haar;
mod resample;

pub use activation::{apply_activation, Activation, DEFAULT_LRELU_SLOPE};
pub use conv::{conv2d, ConvParams};
pub use elementwise::{elementwise_add, elementwise_mul, psnr};
pub use haar::{haar_forward, haar_inverse};
pub use resample::{bilinear_upsample_x2, pixel_shuffle};
