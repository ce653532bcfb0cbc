use std::fmt;

use crate::tensor::{Tensor, TensorError};

/// Slope used for LReLU when none is given.
pub const DEFAULT_LRELU_SLOPE: f32 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f32),
    /// Exact Gaussian-CDF form, `x * Phi(x)`.
    Gelu,
    /// One slope per channel.
    Prelu(Vec<f32>),
}

impl Activation {
    pub fn lrelu() -> Self {
        Activation::LeakyRelu(DEFAULT_LRELU_SLOPE)
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        match self {
            Activation::LeakyRelu(s) if !(*s > 0.0 && *s < 1.0) => Err(TensorError::InvalidParam(
                format!("LReLU slope {s} outside (0, 1)"),
            )),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu(_) => "lrelu",
            Activation::Gelu => "gelu",
            Activation::Prelu(_) => "prelu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::LeakyRelu(s) => write!(f, "lrelu({s})"),
            other => f.write_str(other.name()),
        }
    }
}

#[inline]
fn gelu(x: f32) -> f32 {
    let x = x as f64;
    (0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))) as f32
}

pub fn apply_activation(x: &Tensor, a: &Activation) -> Result<Tensor, TensorError> {
    a.validate()?;
    match a {
        Activation::Relu => Ok(x.map(|v| v.max(0.0))),
        Activation::LeakyRelu(s) => {
            let s = *s;
            Ok(x.map(|v| if v >= 0.0 { v } else { s * v }))
        }
        Activation::Gelu => Ok(x.map(gelu)),
        Activation::Prelu(slopes) => {
            let shape = x.shape();
            if slopes.len() != shape.c {
                return Err(TensorError::DimMismatch {
                    dim: "PReLU slope count",
                    expected: shape.c,
                    actual: slopes.len(),
                });
            }
            let mut out = x.clone();
            let plane = shape.plane();
            for (idx, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
                let s = slopes[idx % shape.c];
                for v in chunk {
                    if *v < 0.0 {
                        *v *= s;
                    }
                }
            }
            Ok(out)
        }
    }
}
