//! Orthonormal 2x2 Haar analysis and synthesis.
//!
//! Each input channel `c` maps to four output channels `4c..4c+4` holding
//! the LL, LH, HL and HH bands. With the 2x2 block `[[a, b], [c, d]]`:
//!
//! ```text
//! LL = (a + b + c + d) / 2      LH = (a + b - c - d) / 2
//! HL = (a - b + c - d) / 2      HH = (a - b - c + d) / 2
//! ```
//!
//! The transform matrix is symmetric and orthogonal, so synthesis applies
//! the same butterfly to the four bands.

use crate::tensor::{Shape, Tensor, TensorError};

#[inline]
fn butterfly(a: f32, b: f32, c: f32, d: f32) -> [f32; 4] {
    let (s0, d0) = (a + b, a - b);
    let (s1, d1) = (c + d, c - d);
    [
        0.5 * (s0 + s1),
        0.5 * (s0 - s1),
        0.5 * (d0 + d1),
        0.5 * (d0 - d1),
    ]
}

pub fn haar_forward(x: &Tensor) -> Result<Tensor, TensorError> {
    let s = x.shape();
    for (dim, v) in [("height", s.h), ("width", s.w)] {
        if v % 2 != 0 {
            return Err(TensorError::NotDivisible {
                dim,
                value: v,
                divisor: 2,
            });
        }
    }
    let os = Shape::new(s.n, 4 * s.c, s.h / 2, s.w / 2);
    let op = os.plane();
    let mut out = vec![0.0f32; os.numel()];
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let base = (n * os.c + 4 * c) * op;
            for y in 0..os.h {
                let r0 = &src[2 * y * s.w..(2 * y + 1) * s.w];
                let r1 = &src[(2 * y + 1) * s.w..(2 * y + 2) * s.w];
                for xx in 0..os.w {
                    let bands = butterfly(r0[2 * xx], r0[2 * xx + 1], r1[2 * xx], r1[2 * xx + 1]);
                    let o = y * os.w + xx;
                    for (k, v) in bands.into_iter().enumerate() {
                        out[base + k * op + o] = v;
                    }
                }
            }
        }
    }
    Tensor::new(os, out)
}

pub fn haar_inverse(y: &Tensor) -> Result<Tensor, TensorError> {
    let s = y.shape();
    if !s.c.is_multiple_of(4) {
        return Err(TensorError::NotDivisible {
            dim: "channels",
            value: s.c,
            divisor: 4,
        });
    }
    let os = Shape::new(s.n, s.c / 4, 2 * s.h, 2 * s.w);
    let mut out = vec![0.0f32; os.numel()];
    for n in 0..s.n {
        for c in 0..os.c {
            let ll = y.plane(n, 4 * c);
            let lh = y.plane(n, 4 * c + 1);
            let hl = y.plane(n, 4 * c + 2);
            let hh = y.plane(n, 4 * c + 3);
            let base = (n * os.c + c) * os.plane();
            for yy in 0..s.h {
                for xx in 0..s.w {
                    let i = yy * s.w + xx;
                    let [a, b, cc, d] = butterfly(ll[i], lh[i], hl[i], hh[i]);
                    let top = base + 2 * yy * os.w + 2 * xx;
                    let bot = top + os.w;
                    out[top] = a;
                    out[top + 1] = b;
                    out[bot] = cc;
                    out[bot + 1] = d;
                }
            }
        }
    }
    Tensor::new(os, out)
}
