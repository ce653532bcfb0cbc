//! Binary PPM (P6, maxval 255) images and tensor conversion.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::tensor::{Shape, Tensor};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("not a binary PPM (P6) file")]
    NotP6,
    #[error("malformed PPM header: {0}")]
    Header(String),
    #[error("unsupported maxval {0}; only 8-bit (255) PPM is supported")]
    MaxVal(u32),
    #[error("pixel data truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn parse_ppm(buf: &[u8]) -> Result<Self, ImageError> {
        let mut pos = 0;
        let mut token = || -> Result<String, ImageError> {
            loop {
                while pos < buf.len() && buf[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < buf.len() && buf[pos] == b'#' {
                    while pos < buf.len() && buf[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < buf.len() && !buf[pos].is_ascii_whitespace() && buf[pos] != b'#' {
                pos += 1;
            }
            if start == pos {
                return Err(ImageError::Header("unexpected end of header".into()));
            }
            Ok(String::from_utf8_lossy(&buf[start..pos]).into_owned())
        };
        if token()? != "P6" {
            return Err(ImageError::NotP6);
        }
        let mut num = |what: &str| -> Result<u32, ImageError> {
            let t = token()?;
            t.parse()
                .map_err(|_| ImageError::Header(format!("bad {what} `{t}`")))
        };
        let width = num("width")? as usize;
        let height = num("height")? as usize;
        let maxval = num("maxval")?;
        if width == 0 || height == 0 {
            return Err(ImageError::Header("zero image dimension".into()));
        }
        if maxval != 255 {
            return Err(ImageError::MaxVal(maxval));
        }
        // exactly one whitespace byte separates the header from the raster
        let start = pos + 1;
        let need = width * height * 3;
        let have = buf.len().saturating_sub(start);
        if have < need {
            return Err(ImageError::Truncated { need, have });
        }
        Ok(Self {
            width,
            height,
            pixels: buf[start..start + need].to_vec(),
        })
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        Self::parse_ppm(&fs::read(path)?)
    }

    /// `pixel / 255` into a 1x3xHxW tensor.
    pub fn to_tensor(&self) -> Tensor {
        let (w, h) = (self.width, self.height);
        Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
            self.pixels[(y * w + x) * 3 + c] as f32 / 255.0
        })
        .expect("non-empty image")
    }

    /// `round(clamp(v, 0, 1) * 255)` from the first batch item of a 3-channel tensor.
    pub fn from_tensor(t: &Tensor) -> Self {
        let s = t.shape();
        assert_eq!(s.c, 3, "RGB tensor expected");
        let mut pixels = vec![0u8; s.h * s.w * 3];
        for c in 0..3 {
            for (i, &v) in t.plane(0, c).iter().enumerate() {
                let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                pixels[i * 3 + c] = (v * 255.0).round() as u8;
            }
        }
        Self {
            width: s.w,
            height: s.h,
            pixels,
        }
    }
}

/// Mirror index without repeating the edge sample, repeated periodically
/// for pads longer than the axis.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let j = i % period;
    if j < n {
        j
    } else {
        period - j
    }
}

/// Reflection-pads bottom and right edges up to multiples of `m`.
pub fn pad_to_multiple(t: &Tensor, m: usize) -> Tensor {
    let s = t.shape();
    let (h, w) = (s.h.div_ceil(m) * m, s.w.div_ceil(m) * m);
    if (h, w) == (s.h, s.w) {
        return t.clone();
    }
    Tensor::from_fn(Shape::new(s.n, s.c, h, w), |n, c, y, x| {
        t.at(n, c, reflect(y, s.h), reflect(x, s.w))
    })
    .expect("non-empty")
}

/// Keeps the top-left `h x w` window.
pub fn crop(t: &Tensor, h: usize, w: usize) -> Tensor {
    let s = t.shape();
    Tensor::from_fn(Shape::new(s.n, s.c, h, w), |n, c, y, x| t.at(n, c, y, x)).expect("non-empty")
}
