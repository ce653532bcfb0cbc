use super::{
    ConvSpec, Form, GraphError, GraphSpec, Layer, LayerId, LayerKind, ModelConfig, RepConvSpec,
    Variant,
};
use crate::ops::Activation;

/// Channels produced by two Haar levels on an RGB input (3 * 4 * 4).
const HAAR_STEM_CHANNELS: usize = 48;
/// Channels the tail conv feeds to PixelShuffle(4): 3 * 4^2.
const TAIL_CHANNELS: usize = 48;

struct Builder {
    layers: Vec<Layer>,
    cur: LayerId,
}

impl Builder {
    fn new() -> Self {
        Self {
            layers: vec![Layer {
                id: 0,
                input: None,
                kind: LayerKind::Input,
            }],
            cur: 0,
        }
    }

    fn push(&mut self, kind: LayerKind) -> LayerId {
        let id = self.layers.len();
        self.layers.push(Layer {
            id,
            input: Some(self.cur),
            kind,
        });
        self.cur = id;
        id
    }

    fn conv(&mut self, spec: ConvSpec) -> LayerId {
        self.push(LayerKind::Conv(spec))
    }

    fn act(&mut self, a: &Activation) -> LayerId {
        self.push(LayerKind::Activation(a.clone()))
    }

    fn branch(&mut self, tag: &str) -> LayerId {
        self.push(LayerKind::BranchPoint(tag.to_string()))
    }

    /// Conv s2 (C->C/4) + ReLU, Conv (C/4->C/4) + ReLU, Conv (C/4->C),
    /// bilinear x2, then gate the block input.
    fn mfa(&mut self, prefix: &str, c: usize) {
        let q = c / 4;
        let entry = self.branch(&format!("{prefix}.in"));
        self.conv(ConvSpec::conv3x3(format!("{prefix}.conv0"), c, q, 2));
        self.act(&Activation::Relu);
        self.conv(ConvSpec::conv3x3(format!("{prefix}.conv1"), q, q, 1));
        self.act(&Activation::Relu);
        self.conv(ConvSpec::conv3x3(format!("{prefix}.conv2"), q, c, 1));
        self.push(LayerKind::BilinearUp2);
        self.push(LayerKind::Mul { src: entry });
    }

    fn finish(self, label: String, form: Form, required_multiple: usize) -> GraphSpec {
        GraphSpec {
            label,
            form,
            in_channels: 3,
            required_multiple,
            layers: self.layers,
        }
    }
}

/// Plain baseline with ReLU activations.
pub fn build_baseline(width: usize, blocks: usize, factor: usize) -> Result<GraphSpec, GraphError> {
    build_baseline_with(width, blocks, factor, &Activation::Relu)
}

/// Plain baseline: a stride-2 stem reaching width `C`, body blocks under
/// one local skip, tail conv to `3 * factor^2` channels, PixelShuffle and a
/// global residual.
///
/// `blocks` counts every Conv+activation pair at width `C`, including the
/// stem conv that first reaches `C`; the body therefore holds `blocks - 1`
/// pairs.
pub fn build_baseline_with(
    width: usize,
    blocks: usize,
    factor: usize,
    act: &Activation,
) -> Result<GraphSpec, GraphError> {
    let mut cfg = ModelConfig::baseline(width, blocks, factor);
    cfg.activation = act.clone();
    cfg.check()?;

    let mut b = Builder::new();
    match factor {
        4 => {
            b.conv(ConvSpec::conv3x3("stem.conv0", 3, width / 2, 2));
            b.act(act);
            b.conv(ConvSpec::conv3x3("stem.conv1", width / 2, width, 2));
        }
        2 => {
            b.conv(ConvSpec::conv3x3("stem.conv0", 3, width, 2));
        }
        _ => {
            b.conv(ConvSpec::conv3x3("stem.conv0", 3, width, 1));
        }
    }
    b.act(act);
    let body = b.branch("body");
    for i in 0..blocks - 1 {
        b.conv(ConvSpec::conv3x3(format!("body.b{i}"), width, width, 1));
        b.act(act);
    }
    b.push(LayerKind::Add { src: body });
    b.conv(ConvSpec::conv3x3(
        "tail.conv",
        width,
        3 * factor * factor,
        1,
    ));
    if factor > 1 {
        b.push(LayerKind::PixelShuffle(factor));
    }
    b.push(LayerKind::Add { src: 0 });
    Ok(b.finish(
        format!("baseline C{width}_N{blocks} x{factor}"),
        Form::Deploy,
        factor,
    ))
}

/// Standalone MFA block for width `c`; weights live under `mfa.*`.
pub fn build_mfa(c: usize) -> Result<GraphSpec, GraphError> {
    if c == 0 || !c.is_multiple_of(4) {
        return Err(GraphError::InvalidConfig(format!(
            "MFA width {c} must be a positive multiple of 4"
        )));
    }
    let mut b = Builder::new();
    b.mfa("mfa", c);
    let mut g = b.finish(format!("mfa C{c}"), Form::Deploy, 2);
    g.in_channels = c;
    Ok(g)
}

/// MFDNet family: two-level Haar stem, M MFDBs under one local skip, tail
/// conv, PixelShuffle(4) and a global residual.
pub fn build_mfdnet(cfg: &ModelConfig) -> Result<GraphSpec, GraphError> {
    if cfg.variant == Variant::Baseline {
        return Err(GraphError::InvalidConfig(
            "baseline variant cannot be built as MFDNet".into(),
        ));
    }
    cfg.check()?;
    let c = cfg.width;
    let act = &cfg.activation;

    let mut b = Builder::new();
    b.push(LayerKind::HaarDown);
    b.push(LayerKind::HaarDown);
    if c != HAAR_STEM_CHANNELS {
        b.conv(ConvSpec::conv3x3("stem.conv0", HAAR_STEM_CHANNELS, c, 1));
        b.act(act);
    }
    let body = b.branch("body");
    for m in 0..cfg.mfdbs {
        for k in 0..cfg.repconvs {
            let site = RepConvSpec {
                name: format!("body.m{m}.k{k}"),
                channels: c,
                expand_ratio: cfg.expand_ratio,
            };
            match cfg.form {
                Form::Train => b.push(LayerKind::RepConv(site)),
                Form::Deploy => b.conv(site.folded_conv()),
            };
            b.act(act);
        }
        b.mfa(&format!("body.m{m}.mfa"), c);
    }
    b.push(LayerKind::Add { src: body });
    b.conv(ConvSpec::conv3x3("tail.conv", c, TAIL_CHANNELS, 1));
    b.push(LayerKind::PixelShuffle(4));
    b.push(LayerKind::Add { src: 0 });
    // Two Haar levels plus the stride-2 step inside MFA.
    Ok(b.finish(cfg.variant.name().to_string(), cfg.form, 8))
}

pub fn build_model(cfg: &ModelConfig) -> Result<GraphSpec, GraphError> {
    match cfg.variant {
        Variant::Baseline => {
            build_baseline_with(cfg.width, cfg.blocks, cfg.factor, &cfg.activation)
        }
        _ => build_mfdnet(cfg),
    }
}
