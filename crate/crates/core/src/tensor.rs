//! Dense NCHW feature maps.

use std::fmt;

use thiserror::Error;

/// Errors raised by the tensor kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{dim} mismatch: expected {expected}, got {actual}")]
    DimMismatch {
        dim: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: Shape, right: Shape },
    #[error("invalid shape {0}: every dimension must be at least 1")]
    EmptyDim(Shape),
    #[error("data length {actual} does not match shape {shape} ({expected} elements)")]
    DataLength {
        shape: Shape,
        expected: usize,
        actual: usize,
    },
    #[error("{dim} = {value} is not divisible by {divisor}")]
    NotDivisible {
        dim: &'static str,
        value: usize,
        divisor: usize,
    },
    #[error(
        "convolution output would be empty: {dim} {size} with kernel {kernel}, padding {padding}"
    )]
    EmptyOutput {
        dim: &'static str,
        size: usize,
        kernel: usize,
        padding: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Logical NCHW shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    fn check_nonempty(&self) -> Result<(), TensorError> {
        if self.n == 0 || self.c == 0 || self.h == 0 || self.w == 0 {
            return Err(TensorError::EmptyDim(*self));
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// A 4-D single-precision tensor stored row-major in NCHW order.
///
/// Convolution kernels reuse the same type with an OIHW interpretation
/// (`n` = output channels, `c` = input channels).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self, TensorError> {
        shape.check_nonempty()?;
        if data.len() != shape.numel() {
            return Err(TensorError::DataLength {
                shape,
                expected: shape.numel(),
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Result<Self, TensorError> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f32) -> Result<Self, TensorError> {
        shape.check_nonempty()?;
        Ok(Self {
            shape,
            data: vec![value; shape.numel()],
        })
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` at every site.
    pub fn from_fn(
        shape: Shape,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Result<Self, TensorError> {
        shape.check_nonempty()?;
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    /// Contiguous `h*w` plane for one (batch, channel) pair.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32, TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, |m, d| if d.is_nan() || d > m { d } else { m }))
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_abs_diff_propagates_nan() {
        let a = Tensor::full(Shape::new(1, 1, 1, 3), 1.0).unwrap();
        let mut b = a.clone();
        b.data_mut()[1] = f32::NAN;
        assert!(a.max_abs_diff(&b).unwrap().is_nan());
        b.data_mut()[1] = 3.0;
        assert_eq!(a.max_abs_diff(&b).unwrap(), 2.0);
    }

    #[test]
    fn rejects_wrong_length() {
        let err = Tensor::new(Shape::new(1, 2, 2, 2), vec![0.0; 7]).unwrap_err();
        assert!(matches!(err, TensorError::DataLength { expected: 8, .. }));
    }

    #[test]
    fn rejects_zero_dim() {
        assert!(matches!(
            Tensor::zeros(Shape::new(1, 0, 2, 2)),
            Err(TensorError::EmptyDim(_))
        ));
    }

    #[test]
    fn index_is_row_major_nchw() {
        let t = Tensor::from_fn(Shape::new(2, 3, 4, 5), |n, c, y, x| {
            (n * 1000 + c * 100 + y * 10 + x) as f32
        })
        .unwrap();
        assert_eq!(t.at(1, 2, 3, 4), 1234.0);
        assert_eq!(t.data()[t.index(1, 2, 3, 4)], 1234.0);
        assert_eq!(t.plane(1, 2)[3 * 5 + 4], 1234.0);
    }
}
