//! Reference implementations used as test oracles. They work on plain
//! NCHW `Vec<f32>` buffers and share no code with the library kernels.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(lo..=hi)).collect()
}

pub fn max_diff(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    let mut m = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        let d = (x - y).abs();
        if d.is_nan() {
            return f32::NAN;
        }
        m = m.max(d);
    }
    m
}

/// Direct cross-correlation, zero padding, accumulated in f64.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    x: &[f32],
    (n, c, h, w): (usize, usize, usize, usize),
    k: &[f32],
    (o, kh): (usize, usize),
    bias: Option<&[f32]>,
    stride: usize,
    pad: usize,
) -> (Vec<f32>, usize, usize) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kh) / stride + 1;
    let mut out = vec![0.0f32; n * o * oh * ow];
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |bb| bb[oc] as f64);
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kh {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x[((b * c + ic) * h + iy as usize) * w + ix as usize];
                                let kv = k[((oc * c + ic) * kh + ky) * kh + kx];
                                acc += xv as f64 * kv as f64;
                            }
                        }
                    }
                    out[((b * o + oc) * oh + oy) * ow + ox] = acc as f32;
                }
            }
        }
    }
    (out, oh, ow)
}

/// Bilinear x2 with half-pixel centres and edge clamping, one sample at a time.
pub fn bilinear_x2(x: &[f32], (n, c, h, w): (usize, usize, usize, usize)) -> Vec<f32> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let coord = |d: usize, size: usize| -> (usize, usize, f64) {
        let s = ((d as f64 + 0.5) / 2.0 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(size - 1);
        let i1 = (i0 + 1).min(size - 1);
        (i0, i1, s - i0 as f64)
    };
    for p in 0..n * c {
        let plane = &x[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            let (y0, y1, fy) = coord(oy, h);
            for ox in 0..ow {
                let (x0, x1, fx) = coord(ox, w);
                let v = |y: usize, xx: usize| plane[y * w + xx] as f64;
                let top = v(y0, x0) * (1.0 - fx) + v(y0, x1) * fx;
                let bot = v(y1, x0) * (1.0 - fx) + v(y1, x1) * fx;
                out.push((top * (1.0 - fy) + bot * fy) as f32);
            }
        }
    }
    out
}

/// Standard normal CDF by composite Simpson quadrature of the density on [0, |x|].
pub fn phi(x: f64) -> f64 {
    let steps = 2000;
    let hstep = x.abs() / steps as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(x.abs());
    for i in 1..steps {
        let t = i as f64 * hstep;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(t);
    }
    let half = s * hstep / 3.0;
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

pub fn gelu(x: f64) -> f64 {
    x * phi(x)
}

/// 2x2 Haar bands per pixel block, band-major per input channel:
/// LL = (a+b+c+d)/2, LH = (a+b-c-d)/2, HL = (a-b+c-d)/2, HH = (a-b-c+d)/2
/// with a b on the top row and c d on the bottom row.
pub fn haar(x: &[f32], (n, c, h, w): (usize, usize, usize, usize)) -> Vec<f32> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0f32; n * 4 * c * oh * ow];
    for b in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let at =
                        |dy: usize, dx: usize| x[((b * c + ch) * h + 2 * y + dy) * w + 2 * xx + dx];
                    let (p, q, r, s) = (at(0, 0), at(0, 1), at(1, 0), at(1, 1));
                    let bands = [
                        (p + q + r + s) / 2.0,
                        (p + q - r - s) / 2.0,
                        (p - q + r - s) / 2.0,
                        (p - q - r + s) / 2.0,
                    ];
                    for (band, v) in bands.iter().enumerate() {
                        out[((b * 4 * c + 4 * ch + band) * oh + y) * ow + xx] = *v;
                    }
                }
            }
        }
    }
    out
}

pub fn psnr(a: &[f32], b: &[f32], peak: f64) -> f64 {
    let mut se = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = *x as f64 - *y as f64;
        se += d * d;
    }
    let mse = se / a.len() as f64;
    10.0 * (peak * peak / mse).log10()
}

/// A RepConv branch as raw buffers: expand E x C x 1 x 1, mid E x E x 3 x 3
/// (+bias), squeeze C x E x 1 x 1 (+bias).
pub struct RawBranch {
    pub c: usize,
    pub e: usize,
    pub expand: Vec<f32>,
    pub mid: Vec<f32>,
    pub mid_b: Vec<f32>,
    pub squeeze: Vec<f32>,
    pub squeeze_b: Vec<f32>,
}

impl RawBranch {
    pub fn random(rng: &mut ChaCha8Rng, c: usize) -> Self {
        let e = 2 * c;
        Self {
            c,
            e,
            expand: uniform(rng, e * c, -0.5, 0.5),
            mid: uniform(rng, e * e * 9, -0.3, 0.3),
            mid_b: uniform(rng, e, -0.1, 0.1),
            squeeze: uniform(rng, c * e, -0.5, 0.5),
            squeeze_b: uniform(rng, c, -0.1, 0.1),
        }
    }

    /// Runs the three convolutions one after another, then adds the input.
    pub fn run(&self, x: &[f32], h: usize, w: usize) -> Vec<f32> {
        let (a, _, _) = naive_conv(x, (1, self.c, h, w), &self.expand, (self.e, 1), None, 1, 0);
        let (b, _, _) = naive_conv(
            &a,
            (1, self.e, h, w),
            &self.mid,
            (self.e, 3),
            Some(&self.mid_b),
            1,
            1,
        );
        let (mut y, _, _) = naive_conv(
            &b,
            (1, self.e, h, w),
            &self.squeeze,
            (self.c, 1),
            Some(&self.squeeze_b),
            1,
            0,
        );
        for (o, i) in y.iter_mut().zip(x) {
            *o += i;
        }
        y
    }
}

/// MACs of a k x k convolution producing `out_hw` pixels.
pub fn conv_macs(in_ch: u64, out_ch: u64, k: u64, out_hw: u64) -> u64 {
    in_ch * out_ch * k * k * out_hw
}

/// Closed-form MACs of the plain baseline at `w x h`: strided stem reaching
/// width C, N-1 further 3x3 convs at the body resolution, a tail to 3 f^2.
pub fn baseline_macs(c: u64, n: u64, f: u64, w: u64, h: u64) -> u64 {
    let body = (w / f) * (h / f);
    let stem = match f {
        1 => conv_macs(3, c, 3, body),
        2 => conv_macs(3, c, 3, body),
        4 => conv_macs(3, c / 2, 3, (w / 2) * (h / 2)) + conv_macs(c / 2, c, 3, body),
        _ => unreachable!(),
    };
    stem + (n - 1) * conv_macs(c, c, 3, body) + conv_macs(c, 3 * f * f, 3, body)
}

/// Closed-form MACs of a deploy-form MFDNet at width 48: M*K 3x3 convs and M
/// attention blocks on the 1/4 body, a tail conv. Haar stages are free.
pub fn mfdnet_macs(m: u64, k: u64, w: u64, h: u64) -> u64 {
    let c = 48;
    let body = (w / 4) * (h / 4);
    let low = body / 4;
    let mfa =
        conv_macs(c, c / 4, 3, low) + conv_macs(c / 4, c / 4, 3, low) + conv_macs(c / 4, c, 3, low);
    m * k * conv_macs(c, c, 3, body) + m * mfa + conv_macs(c, 48, 3, body)
}
