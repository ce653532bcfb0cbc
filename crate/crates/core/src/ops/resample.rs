use crate::tensor::{Shape, Tensor, TensorError};

/// Source coordinate and blend weight for one destination index under
/// half-pixel centres with edge clamping.
#[inline]
fn source_taps(dst: usize, size: usize) -> (usize, usize, f32) {
    let src = ((dst as f32 + 0.5) / 2.0 - 0.5).clamp(0.0, (size - 1) as f32);
    let i0 = src.floor() as usize;
    let i1 = (i0 + 1).min(size - 1);
    (i0, i1, src - i0 as f32)
}

/// Bilinear 2x upsampling with half-pixel centres and edge clamping.
pub fn bilinear_upsample_x2(x: &Tensor) -> Result<Tensor, TensorError> {
    let s = x.shape();
    let os = Shape::new(s.n, s.c, 2 * s.h, 2 * s.w);
    let cols: Vec<_> = (0..os.w).map(|d| source_taps(d, s.w)).collect();
    let rows: Vec<_> = (0..os.h).map(|d| source_taps(d, s.h)).collect();
    let mut out = Vec::with_capacity(os.numel());
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            for &(y0, y1, fy) in &rows {
                let r0 = &src[y0 * s.w..(y0 + 1) * s.w];
                let r1 = &src[y1 * s.w..(y1 + 1) * s.w];
                for &(x0, x1, fx) in &cols {
                    let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                    let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
                    out.push(top + (bot - top) * fy);
                }
            }
        }
    }
    Tensor::new(os, out)
}

/// Sub-pixel rearrangement: `out[n, c, r*y + dy, r*x + dx] = in[n, c*r*r + dy*r + dx, y, x]`.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor, TensorError> {
    if r == 0 {
        return Err(TensorError::InvalidParam(
            "upscale factor must be positive".into(),
        ));
    }
    let s = x.shape();
    let rr = r * r;
    if !s.c.is_multiple_of(rr) {
        return Err(TensorError::NotDivisible {
            dim: "channels",
            value: s.c,
            divisor: rr,
        });
    }
    let os = Shape::new(s.n, s.c / rr, s.h * r, s.w * r);
    let mut out = vec![0.0f32; os.numel()];
    for n in 0..s.n {
        for ci in 0..s.c {
            let (co, sub) = (ci / rr, ci % rr);
            let (dy, dx) = (sub / r, sub % r);
            let src = x.plane(n, ci);
            let base = (n * os.c + co) * os.plane();
            for y in 0..s.h {
                let orow = base + (r * y + dy) * os.w;
                for (xx, &v) in src[y * s.w..(y + 1) * s.w].iter().enumerate() {
                    out[orow + r * xx + dx] = v;
                }
            }
        }
    }
    Tensor::new(os, out)
}
