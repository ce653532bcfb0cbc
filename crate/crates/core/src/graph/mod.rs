//! Layer graphs for the baseline and MFDNet families.
//!
//! A [`GraphSpec`] is an ordered list of layers. Every layer consumes the
//! output of one earlier layer; `Add` and `Mul` additionally read a side
//! input (`src`) that must also refer to an earlier layer. The first layer
//! is the unique graph input and the last layer is the unique output.

mod build;
mod config;
mod exec;
mod validate;

use std::fmt;

use thiserror::Error;

use crate::ops::Activation;
use crate::tensor::TensorError;

pub use build::{build_baseline, build_baseline_with, build_mfa, build_mfdnet, build_model};
pub use config::{Form, ModelConfig, Variant};
pub use exec::forward;
pub use validate::validate;

pub type LayerId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph is empty")]
    Empty,
    #[error("layer {0}: the first layer must be the single graph input")]
    BadInput(LayerId),
    #[error("duplicate layer id {0}")]
    DuplicateId(LayerId),
    #[error("cycle detected: layer {layer} references layer {target}, which is not earlier")]
    Cycle { layer: LayerId, target: LayerId },
    #[error("dangling edge: layer {layer} references unknown layer {target}")]
    Dangling { layer: LayerId, target: LayerId },
    #[error("layer {0} is never consumed; a graph has exactly one output")]
    ExtraOutput(LayerId),
    #[error("input {dim} {value} is not divisible by {multiple}")]
    NotDivisible {
        dim: &'static str,
        value: usize,
        multiple: usize,
    },
    #[error("layer {layer}: {source}")]
    Shape {
        layer: LayerId,
        #[source]
        source: TensorError,
    },
    #[error("layer {layer}: missing weight tensor `{name}`")]
    MissingWeight { layer: LayerId, name: String },
    #[error("weight `{name}` has dims {actual:?}, expected {expected:?}")]
    WeightShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
}

/// Geometry and weight prefix of one convolution. Tensors are looked up as
/// `{name}.w` (OIHW) and `{name}.b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub bias: bool,
}

impl ConvSpec {
    pub fn conv3x3(name: impl Into<String>, in_ch: usize, out_ch: usize, stride: usize) -> Self {
        Self {
            name: name.into(),
            in_ch,
            out_ch,
            kernel: 3,
            stride,
            padding: 1,
            bias: true,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn params(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel * self.kernel
            + if self.bias { self.out_ch } else { 0 }
    }
}

/// A train-time expand/squeeze branch site.
#[derive(Clone, Debug, PartialEq)]
pub struct RepConvSpec {
    pub name: String,
    pub channels: usize,
    pub expand_ratio: usize,
}

impl RepConvSpec {
    pub fn expanded(&self) -> usize {
        self.channels * self.expand_ratio
    }

    pub fn expand_name(&self) -> String {
        format!("{}.expand.w", self.name)
    }
    pub fn mid_weight_name(&self) -> String {
        format!("{}.mid.w", self.name)
    }
    pub fn mid_bias_name(&self) -> String {
        format!("{}.mid.b", self.name)
    }
    pub fn squeeze_weight_name(&self) -> String {
        format!("{}.squeeze.w", self.name)
    }
    pub fn squeeze_bias_name(&self) -> String {
        format!("{}.squeeze.b", self.name)
    }

    /// The deploy-form convolution that replaces this site.
    pub fn folded_conv(&self) -> ConvSpec {
        ConvSpec::conv3x3(
            format!("{}.conv", self.name),
            self.channels,
            self.channels,
            1,
        )
    }

    pub fn params(&self) -> usize {
        let (c, e) = (self.channels, self.expanded());
        e * c + e * e * 9 + e + c * e + c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Input,
    Conv(ConvSpec),
    Activation(Activation),
    HaarDown,
    BilinearUp2,
    PixelShuffle(usize),
    Mul {
        src: LayerId,
    },
    Add {
        src: LayerId,
    },
    RepConv(RepConvSpec),
    /// Identity marker for the origin of a skip edge.
    BranchPoint(String),
}

impl LayerKind {
    pub fn label(&self) -> String {
        match self {
            LayerKind::Input => "input".into(),
            LayerKind::Conv(c) => format!("conv{}x{}", c.kernel, c.kernel),
            LayerKind::Activation(a) => a.to_string(),
            LayerKind::HaarDown => "haar".into(),
            LayerKind::BilinearUp2 => "bilinear2x".into(),
            LayerKind::PixelShuffle(r) => format!("pixelshuffle{r}"),
            LayerKind::Mul { .. } => "mul".into(),
            LayerKind::Add { .. } => "add".into(),
            LayerKind::RepConv(_) => "repconv".into(),
            LayerKind::BranchPoint(tag) => format!("branch:{tag}"),
        }
    }

    pub fn side_input(&self) -> Option<LayerId> {
        match self {
            LayerKind::Mul { src } | LayerKind::Add { src } => Some(*src),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub id: LayerId,
    /// Main input; `None` only for the graph input.
    pub input: Option<LayerId>,
    pub kind: LayerKind,
}

/// How a weight tensor is consumed, used by initializers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight { fan_in: usize },
    Bias { fan_in: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub role: ParamRole,
    pub layer: LayerId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphSpec {
    pub label: String,
    pub form: Form,
    pub in_channels: usize,
    /// Input height and width must be multiples of this.
    pub required_multiple: usize,
    pub layers: Vec<Layer>,
}

impl GraphSpec {
    pub fn output_id(&self) -> Option<LayerId> {
        self.layers.last().map(|l| l.id)
    }

    pub fn count(&self, pred: impl Fn(&LayerKind) -> bool) -> usize {
        self.layers.iter().filter(|l| pred(&l.kind)).count()
    }

    pub fn repconv_sites(&self) -> usize {
        self.count(|k| matches!(k, LayerKind::RepConv(_)))
    }

    /// Every tensor the graph reads from a weight store, in layer order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match &layer.kind {
                LayerKind::Conv(c) => push_conv(&mut out, c, layer.id),
                LayerKind::RepConv(r) => {
                    let (c, e) = (r.channels, r.expanded());
                    let mut add = |name: String, dims: Vec<usize>, role| {
                        out.push(ParamSpec {
                            name,
                            dims,
                            role,
                            layer: layer.id,
                        })
                    };
                    add(
                        r.expand_name(),
                        vec![e, c, 1, 1],
                        ParamRole::Weight { fan_in: c },
                    );
                    add(
                        r.mid_weight_name(),
                        vec![e, e, 3, 3],
                        ParamRole::Weight { fan_in: e * 9 },
                    );
                    add(
                        r.mid_bias_name(),
                        vec![e],
                        ParamRole::Bias { fan_in: e * 9 },
                    );
                    add(
                        r.squeeze_weight_name(),
                        vec![c, e, 1, 1],
                        ParamRole::Weight { fan_in: e },
                    );
                    add(
                        r.squeeze_bias_name(),
                        vec![c],
                        ParamRole::Bias { fan_in: e },
                    );
                }
                _ => {}
            }
        }
        out
    }

    /// Checks that every tensor the graph needs is present with the right dims.
    pub fn check_weights(&self, w: &crate::weights::WeightStore) -> Result<(), GraphError> {
        for p in self.param_specs() {
            let t = w.get(&p.name).ok_or_else(|| GraphError::MissingWeight {
                layer: p.layer,
                name: p.name.clone(),
            })?;
            if t.dims != p.dims {
                return Err(GraphError::WeightShape {
                    name: p.name,
                    expected: p.dims,
                    actual: t.dims.clone(),
                });
            }
        }
        Ok(())
    }
}

fn push_conv(out: &mut Vec<ParamSpec>, c: &ConvSpec, layer: LayerId) {
    let fan_in = c.in_ch * c.kernel * c.kernel;
    out.push(ParamSpec {
        name: c.weight_name(),
        dims: vec![c.out_ch, c.in_ch, c.kernel, c.kernel],
        role: ParamRole::Weight { fan_in },
        layer,
    });
    if c.bias {
        out.push(ParamSpec {
            name: c.bias_name(),
            dims: vec![c.out_ch],
            role: ParamRole::Bias { fan_in },
            layer,
        });
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} ({:?}-form)", self.label, self.form)?;
        for l in &self.layers {
            let input = l.input.map_or("-".to_string(), |i| i.to_string());
            write!(f, "  {:>3} <- {:>3}  {}", l.id, input, l.kind.label())?;
            match &l.kind {
                LayerKind::Conv(c) => {
                    write!(f, " {} {}->{} s{}", c.name, c.in_ch, c.out_ch, c.stride)?
                }
                LayerKind::RepConv(r) => {
                    write!(f, " {} c{} x{}", r.name, r.channels, r.expand_ratio)?
                }
                LayerKind::Mul { src } | LayerKind::Add { src } => write!(f, " (+{src})")?,
                _ => {}
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
