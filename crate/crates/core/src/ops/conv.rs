use rayon::prelude::*;

use crate::tensor::{Shape, Tensor, TensorError};

/// Convolution weights (OIHW) plus optional bias and geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub weights: Tensor,
    pub bias: Option<Vec<f32>>,
    pub stride: usize,
    pub padding: usize,
}

impl ConvParams {
    pub fn new(
        weights: Tensor,
        bias: Option<Vec<f32>>,
        stride: usize,
        padding: usize,
    ) -> Result<Self, TensorError> {
        let ws = weights.shape();
        if let Some(b) = &bias {
            if b.len() != ws.n {
                return Err(TensorError::DimMismatch {
                    dim: "bias length",
                    expected: ws.n,
                    actual: b.len(),
                });
            }
        }
        if stride == 0 {
            return Err(TensorError::InvalidParam("stride must be positive".into()));
        }
        if ws.h != ws.w {
            return Err(TensorError::DimMismatch {
                dim: "kernel width",
                expected: ws.h,
                actual: ws.w,
            });
        }
        Ok(Self {
            weights,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_ch(&self) -> usize {
        self.weights.shape().n
    }

    pub fn in_ch(&self) -> usize {
        self.weights.shape().c
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape().h
    }

    /// Output spatial size along one axis.
    pub fn out_dim(&self, size: usize, dim: &'static str) -> Result<usize, TensorError> {
        let k = self.kernel();
        let padded = size + 2 * self.padding;
        if padded < k {
            return Err(TensorError::EmptyOutput {
                dim,
                size,
                kernel: k,
                padding: self.padding,
            });
        }
        Ok((padded - k) / self.stride + 1)
    }

    pub fn out_shape(&self, input: Shape) -> Result<Shape, TensorError> {
        if input.c != self.in_ch() {
            return Err(TensorError::DimMismatch {
                dim: "input channels",
                expected: self.in_ch(),
                actual: input.c,
            });
        }
        Ok(Shape::new(
            input.n,
            self.out_ch(),
            self.out_dim(input.h, "height")?,
            self.out_dim(input.w, "width")?,
        ))
    }
}

/// 2-D cross-correlation with symmetric zero padding.
///
/// Each output plane is produced by one task in a fixed (input channel,
/// kernel row, kernel column, output row) order, so results do not depend
/// on the number of worker threads.
pub fn conv2d(x: &Tensor, p: &ConvParams) -> Result<Tensor, TensorError> {
    let xs = x.shape();
    let os = p.out_shape(xs)?;
    let k = p.kernel();
    let (stride, pad) = (p.stride, p.padding);
    let wts = p.weights.data();
    let in_ch = xs.c;
    let plane = os.plane();

    let mut out = vec![0.0f32; os.numel()];
    out.par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, dst)| {
            let n = idx / os.c;
            let o = idx % os.c;
            if let Some(b) = &p.bias {
                dst.fill(b[o]);
            }
            for i in 0..in_ch {
                let src = x.plane(n, i);
                let wbase = (o * in_ch + i) * k * k;
                for u in 0..k {
                    for v in 0..k {
                        let wv = wts[wbase + u * k + v];
                        accumulate_tap(dst, src, wv, xs, os, u, v, stride, pad);
                    }
                }
            }
        });
    Tensor::new(os, out)
}

/// Adds `wv * src[shifted]` for one kernel tap into an output plane.
#[allow(clippy::too_many_arguments)]
#[inline]
fn accumulate_tap(
    dst: &mut [f32],
    src: &[f32],
    wv: f32,
    xs: Shape,
    os: Shape,
    u: usize,
    v: usize,
    stride: usize,
    pad: usize,
) {
    // Valid output columns satisfy 0 <= ox*stride + v - pad < w.
    let ox_lo = if v >= pad {
        0
    } else {
        (pad - v).div_ceil(stride)
    };
    let ox_hi = if xs.w + pad > v {
        ((xs.w + pad - v - 1) / stride + 1).min(os.w)
    } else {
        0
    };
    if ox_lo >= ox_hi {
        return;
    }
    for oy in 0..os.h {
        let iy = oy * stride + u;
        if iy < pad || iy - pad >= xs.h {
            continue;
        }
        let iy = iy - pad;
        let row = &src[iy * xs.w..(iy + 1) * xs.w];
        let drow = &mut dst[oy * os.w + ox_lo..oy * os.w + ox_hi];
        let ix0 = ox_lo * stride + v - pad;
        if stride == 1 {
            let srow = &row[ix0..ix0 + drow.len()];
            for (d, s) in drow.iter_mut().zip(srow) {
                *d += wv * s;
            }
        } else {
            for (j, d) in drow.iter_mut().enumerate() {
                *d += wv * row[ix0 + j * stride];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_kernel() -> ConvParams {
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        ConvParams::new(
            Tensor::new(Shape::new(1, 1, 3, 3), w).unwrap(),
            Some(vec![0.0]),
            1,
            1,
        )
        .unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = Tensor::full(Shape::new(1, 1, 3, 3), 1.0).unwrap();
        let y = conv2d(&x, &identity_kernel()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn pointwise_kernel_sums_channels() {
        let x = Tensor::new(
            Shape::new(1, 2, 2, 2),
            vec![1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0],
        )
        .unwrap();
        let p = ConvParams::new(
            Tensor::new(Shape::new(1, 2, 1, 1), vec![1.0, 1.0]).unwrap(),
            Some(vec![0.0]),
            1,
            0,
        )
        .unwrap();
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(y.data(), &[11.0, 22.0, 33.0, 44.0]);
    }

    #[test]
    fn stride_two_halves_even_dims() {
        let p =
            ConvParams::new(Tensor::zeros(Shape::new(4, 3, 3, 3)).unwrap(), None, 2, 1).unwrap();
        let s = p.out_shape(Shape::new(1, 3, 720, 1280)).unwrap();
        assert_eq!(s, Shape::new(1, 4, 360, 640));
    }

    #[test]
    fn channel_mismatch_names_dimension() {
        let x = Tensor::zeros(Shape::new(1, 3, 4, 4)).unwrap();
        let err = conv2d(&x, &identity_kernel()).unwrap_err();
        assert_eq!(
            err,
            TensorError::DimMismatch {
                dim: "input channels",
                expected: 1,
                actual: 3
            }
        );
    }

    #[test]
    fn bias_length_checked() {
        let err = ConvParams::new(
            Tensor::zeros(Shape::new(2, 1, 3, 3)).unwrap(),
            Some(vec![0.0]),
            1,
            1,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            TensorError::DimMismatch {
                dim: "bias length",
                ..
            }
        ));
    }

    #[test]
    fn kernel_larger_than_padded_input_is_rejected() {
        let p =
            ConvParams::new(Tensor::zeros(Shape::new(1, 1, 3, 3)).unwrap(), None, 1, 0).unwrap();
        let x = Tensor::zeros(Shape::new(1, 1, 2, 2)).unwrap();
        assert!(matches!(
            conv2d(&x, &p),
            Err(TensorError::EmptyOutput { dim: "height", .. })
        ));
    }
}
