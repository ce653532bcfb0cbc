//! Folding the train-time RepConv branch into one 3x3 convolution.
//!
//! The branch computes
//!
//! ```text
//! y = squeeze(mid(expand(x))) + x
//! ```
//!
//! with a bias-free 1x1 `expand` (C -> E), a 3x3 `mid` (E -> E) and a 1x1
//! `squeeze` (E -> C). All three stages and the skip are linear in `x`, so
//! the composite is a single 3x3 convolution. Because `expand` has no bias,
//! zero-padding its output is the same as zero-padding `x`, which keeps the
//! fold exact on the border pixels too.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{GraphError, GraphSpec, LayerId, LayerKind, RepConvSpec};
use crate::ops::{conv2d, elementwise_add, ConvParams};
use crate::tensor::{Shape, Tensor, TensorError};
use crate::weights::{WeightStore, WeightTensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FoldError {
    #[error("{what} mismatch: {left} vs {right}")]
    DimMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("the 1x1 expand conv must be bias-free for an exact fold")]
    ExpandHasBias,
    #[error("expected a {expected}x{expected} kernel, got {actual}x{actual}")]
    KernelSize { expected: usize, actual: usize },
    #[error("identity needs a square channel map, got {out_ch}x{in_ch}")]
    NotSquare { out_ch: usize, in_ch: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

fn expect_kernel(p: &ConvParams, k: usize) -> Result<(), FoldError> {
    if p.kernel() != k {
        return Err(FoldError::KernelSize {
            expected: k,
            actual: p.kernel(),
        });
    }
    Ok(())
}

fn bias_or_zero(p: &ConvParams) -> Vec<f32> {
    p.bias.clone().unwrap_or_else(|| vec![0.0; p.out_ch()])
}

/// `conv3x3(conv1x1(x))` as one 3x3 conv: `k[o,i,u,v] = sum_m k3[o,m,u,v] * k1[m,i]`.
pub fn fold_1x1_then_3x3(k1: &ConvParams, k3: &ConvParams) -> Result<ConvParams, FoldError> {
    expect_kernel(k1, 1)?;
    expect_kernel(k3, 3)?;
    if k1.bias.is_some() {
        return Err(FoldError::ExpandHasBias);
    }
    let (c, e, o) = (k1.in_ch(), k1.out_ch(), k3.out_ch());
    if k3.in_ch() != e {
        return Err(FoldError::DimMismatch {
            what: "inner channel",
            left: e,
            right: k3.in_ch(),
        });
    }
    let a = k1.weights.data();
    let b = k3.weights.data();
    let mut k = vec![0.0f32; o * c * 9];
    for oc in 0..o {
        for m in 0..e {
            let tap = &b[(oc * e + m) * 9..(oc * e + m + 1) * 9];
            for i in 0..c {
                let s = a[m * c + i];
                let dst = &mut k[(oc * c + i) * 9..(oc * c + i + 1) * 9];
                for (d, t) in dst.iter_mut().zip(tap) {
                    *d += t * s;
                }
            }
        }
    }
    Ok(ConvParams::new(
        Tensor::new(Shape::new(o, c, 3, 3), k)?,
        Some(bias_or_zero(k3)),
        1,
        1,
    )?)
}

/// `conv1x1(conv3x3(x))` as one 3x3 conv:
/// `k[o,i,u,v] = sum_m k2[o,m] * k3[m,i,u,v]`, `b[o] = b2[o] + sum_m k2[o,m] * b3[m]`.
pub fn fold_3x3_then_1x1(k3: &ConvParams, k2: &ConvParams) -> Result<ConvParams, FoldError> {
    expect_kernel(k3, 3)?;
    expect_kernel(k2, 1)?;
    let (c, e, o) = (k3.in_ch(), k3.out_ch(), k2.out_ch());
    if k2.in_ch() != e {
        return Err(FoldError::DimMismatch {
            what: "inner channel",
            left: e,
            right: k2.in_ch(),
        });
    }
    let a = k3.weights.data();
    let mix = k2.weights.data();
    let b3 = bias_or_zero(k3);
    let mut bias = bias_or_zero(k2);
    let mut k = vec![0.0f32; o * c * 9];
    for oc in 0..o {
        let dst = &mut k[oc * c * 9..(oc + 1) * c * 9];
        for m in 0..e {
            let s = mix[oc * e + m];
            for (d, t) in dst.iter_mut().zip(&a[m * c * 9..(m + 1) * c * 9]) {
                *d += s * t;
            }
            bias[oc] += s * b3[m];
        }
    }
    Ok(ConvParams::new(
        Tensor::new(Shape::new(o, c, 3, 3), k)?,
        Some(bias),
        k3.stride,
        k3.padding,
    )?)
}

/// Adds the identity map to a square 3x3 conv (centre tap +1).
pub fn add_identity(p: &ConvParams) -> Result<ConvParams, FoldError> {
    expect_kernel(p, 3)?;
    let (o, i) = (p.out_ch(), p.in_ch());
    if o != i {
        return Err(FoldError::NotSquare {
            out_ch: o,
            in_ch: i,
        });
    }
    let mut out = p.clone();
    let data = out.weights.data_mut();
    for c in 0..o {
        data[(c * i + c) * 9 + 4] += 1.0;
    }
    Ok(out)
}

/// Train-time parameters of one RepConv site.
#[derive(Clone, Debug, PartialEq)]
pub struct RepConvBranch {
    /// E x C x 1 x 1, no bias.
    pub expand: ConvParams,
    /// E x E x 3 x 3 with bias.
    pub mid: ConvParams,
    /// C x E x 1 x 1 with bias.
    pub squeeze: ConvParams,
    pub has_skip: bool,
}

/// Deploy-time replacement for a [`RepConvBranch`].
#[derive(Clone, Debug, PartialEq)]
pub struct FoldedConv(pub ConvParams);

impl RepConvBranch {
    pub fn new(
        expand: ConvParams,
        mid: ConvParams,
        squeeze: ConvParams,
        has_skip: bool,
    ) -> Result<Self, FoldError> {
        expect_kernel(&expand, 1)?;
        expect_kernel(&mid, 3)?;
        expect_kernel(&squeeze, 1)?;
        if expand.bias.is_some() {
            return Err(FoldError::ExpandHasBias);
        }
        let (c, e) = (expand.in_ch(), expand.out_ch());
        for (what, l, r) in [
            ("mid input", e, mid.in_ch()),
            ("mid output", e, mid.out_ch()),
            ("squeeze input", e, squeeze.in_ch()),
            ("squeeze output", c, squeeze.out_ch()),
        ] {
            if l != r {
                return Err(FoldError::DimMismatch {
                    what,
                    left: l,
                    right: r,
                });
            }
        }
        if e < c {
            return Err(FoldError::DimMismatch {
                what: "expanded width below input width",
                left: e,
                right: c,
            });
        }
        Ok(Self {
            expand,
            mid,
            squeeze,
            has_skip,
        })
    }

    pub fn channels(&self) -> usize {
        self.expand.in_ch()
    }

    pub fn expanded(&self) -> usize {
        self.expand.out_ch()
    }

    /// Reads a site's tensors from a weight store.
    pub fn from_store(
        spec: &RepConvSpec,
        w: &WeightStore,
        layer: LayerId,
    ) -> Result<Self, GraphError> {
        let (c, e) = (spec.channels, spec.expanded());
        let fetch = |name: String, dims: Vec<usize>| -> Result<&WeightTensor, GraphError> {
            let t = w.get(&name).ok_or_else(|| GraphError::MissingWeight {
                layer,
                name: name.clone(),
            })?;
            if t.dims != dims {
                return Err(GraphError::WeightShape {
                    name,
                    expected: dims,
                    actual: t.dims.clone(),
                });
            }
            Ok(t)
        };
        let err = |source: TensorError| GraphError::Shape { layer, source };
        let conv = |wt: &WeightTensor, bias: Option<&WeightTensor>, pad| {
            ConvParams::new(
                wt.to_tensor().map_err(err)?,
                bias.map(|b| b.data.clone()),
                1,
                pad,
            )
            .map_err(err)
        };
        let expand = conv(fetch(spec.expand_name(), vec![e, c, 1, 1])?, None, 0)?;
        let mid = conv(
            fetch(spec.mid_weight_name(), vec![e, e, 3, 3])?,
            Some(fetch(spec.mid_bias_name(), vec![e])?),
            1,
        )?;
        let squeeze = conv(
            fetch(spec.squeeze_weight_name(), vec![c, e, 1, 1])?,
            Some(fetch(spec.squeeze_bias_name(), vec![c])?),
            0,
        )?;
        Ok(Self {
            expand,
            mid,
            squeeze,
            has_skip: true,
        })
    }

    /// Runs the branch stage by stage.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let h = conv2d(x, &self.expand)?;
        let h = conv2d(&h, &self.mid)?;
        let y = conv2d(&h, &self.squeeze)?;
        if self.has_skip {
            elementwise_add(&y, x)
        } else {
            Ok(y)
        }
    }
}

impl FoldedConv {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        conv2d(x, &self.0)
    }
}

/// Expand/mid fold, then the squeeze fold, then the identity.
pub fn fold_repconv(branch: &RepConvBranch) -> Result<FoldedConv, FoldError> {
    let pre = fold_1x1_then_3x3(&branch.expand, &branch.mid)?;
    let post = fold_3x3_then_1x1(&pre, &branch.squeeze)?;
    let full = if branch.has_skip {
        add_identity(&post)?
    } else {
        post
    };
    Ok(FoldedConv(full))
}

/// Replaces every RepConv site by its folded 3x3 conv. Other layers and
/// their weights are copied unchanged; branch tensors are dropped. A graph
/// without RepConv sites is returned as is.
pub fn fold_graph(g: &GraphSpec, w: &WeightStore) -> Result<(GraphSpec, WeightStore), FoldError> {
    let mut deploy = g.clone();
    let mut weights = w.clone();
    for layer in deploy.layers.iter_mut() {
        let LayerKind::RepConv(site) = &layer.kind else {
            continue;
        };
        let branch = RepConvBranch::from_store(site, w, layer.id)?;
        let FoldedConv(p) = fold_repconv(&branch)?;
        for name in [
            site.expand_name(),
            site.mid_weight_name(),
            site.mid_bias_name(),
            site.squeeze_weight_name(),
            site.squeeze_bias_name(),
        ] {
            weights.remove(&name);
        }
        let conv = site.folded_conv();
        weights.insert(conv.weight_name(), WeightTensor::from_tensor(&p.weights));
        weights.insert(
            conv.bias_name(),
            WeightTensor::new(vec![conv.out_ch], p.bias.unwrap_or_default())?,
        );
        layer.kind = LayerKind::Conv(conv);
    }
    deploy.form = crate::graph::Form::Deploy;
    Ok((deploy, weights))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldReport {
    pub trials: usize,
    pub max_abs_diff: f32,
    pub tol: f32,
    pub pass: bool,
}

/// Channel widths cycled through by [`verify_fold`].
pub const VERIFY_WIDTHS: [usize; 3] = [4, 16, 48];

fn uniform_conv(
    rng: &mut ChaCha8Rng,
    out_ch: usize,
    in_ch: usize,
    k: usize,
    bias: bool,
) -> ConvParams {
    let bound = (6.0 / (in_ch * k * k) as f32).sqrt();
    let shape = Shape::new(out_ch, in_ch, k, k);
    let data = (0..shape.numel())
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    let b = bias.then(|| (0..out_ch).map(|_| rng.gen_range(-0.1..0.1)).collect());
    ConvParams::new(
        Tensor::new(shape, data).expect("shape is non-empty"),
        b,
        1,
        k / 2,
    )
    .expect("consistent parameters")
}

/// Random branch with E = 2C and fan-in scaled uniform weights.
pub fn random_branch(rng: &mut ChaCha8Rng, c: usize) -> RepConvBranch {
    let e = 2 * c;
    RepConvBranch::new(
        uniform_conv(rng, e, c, 1, false),
        uniform_conv(rng, e, e, 3, true),
        uniform_conv(rng, c, e, 1, true),
        true,
    )
    .expect("consistent branch")
}

/// Compares branch and folded outputs on seeded random branches and inputs
/// in [-1, 1]. Trial `t` uses width `VERIFY_WIDTHS[t % 3]` on a 12x12 map.
pub fn verify_fold(seed: u64, trials: usize, tol: f32) -> FoldReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_abs_diff = 0.0f32;
    for t in 0..trials {
        let c = VERIFY_WIDTHS[t % VERIFY_WIDTHS.len()];
        let branch = random_branch(&mut rng, c);
        let shape = Shape::new(1, c, 12, 12);
        let x = Tensor::new(
            shape,
            (0..shape.numel())
                .map(|_| rng.gen_range(-1.0..=1.0))
                .collect(),
        )
        .expect("non-empty");
        let folded = fold_repconv(&branch).expect("valid branch folds");
        let a = branch.forward(&x).expect("branch runs");
        let b = folded.forward(&x).expect("folded runs");
        max_abs_diff = max_abs_diff.max(a.max_abs_diff(&b).expect("same shape"));
    }
    FoldReport {
        trials,
        max_abs_diff,
        tol,
        pass: trials > 0 && max_abs_diff <= tol,
    }
}
