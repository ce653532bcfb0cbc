use std::fmt;
use std::str::FromStr;

use super::GraphError;
use crate::ops::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    MfdnetS,
    Mfdnet,
    MfdnetL,
    Custom,
}

impl Variant {
    pub const MFDNET_FAMILY: [Variant; 3] = [Variant::MfdnetS, Variant::Mfdnet, Variant::MfdnetL];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::MfdnetS => "mfdnet-s",
            Variant::Mfdnet => "mfdnet",
            Variant::MfdnetL => "mfdnet-l",
            Variant::Custom => "custom",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Variant::Baseline),
            "mfdnet-s" => Ok(Variant::MfdnetS),
            "mfdnet" => Ok(Variant::Mfdnet),
            "mfdnet-l" => Ok(Variant::MfdnetL),
            "custom" => Ok(Variant::Custom),
            other => Err(GraphError::InvalidConfig(format!(
                "unknown model `{other}`"
            ))),
        }
    }
}

/// Multi-branch training topology or folded inference topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Form {
    Train,
    Deploy,
}

impl FromStr for Form {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Form::Train),
            "deploy" => Ok(Form::Deploy),
            other => Err(GraphError::InvalidConfig(format!("unknown form `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub width: usize,
    /// Conv+activation depth of the baseline.
    pub blocks: usize,
    /// Number of MFDBs (M).
    pub mfdbs: usize,
    /// RepConv+activation units per MFDB (K).
    pub repconvs: usize,
    pub factor: usize,
    pub activation: Activation,
    pub form: Form,
    pub expand_ratio: usize,
}

impl ModelConfig {
    pub const MFDNET_WIDTH: usize = 48;

    pub fn baseline(width: usize, blocks: usize, factor: usize) -> Self {
        Self {
            variant: Variant::Baseline,
            width,
            blocks,
            mfdbs: 0,
            repconvs: 0,
            factor,
            activation: Activation::Relu,
            form: Form::Deploy,
            expand_ratio: 2,
        }
    }

    /// MFDNet-family preset. `Baseline` and `Custom` fall back to MFDNet's
    /// (M, K) so the caller can adjust fields afterwards.
    pub fn mfdnet(variant: Variant, form: Form) -> Self {
        let (mfdbs, repconvs) = match variant {
            Variant::MfdnetS => (1, 1),
            Variant::MfdnetL => (6, 3),
            _ => (3, 3),
        };
        Self {
            variant,
            width: Self::MFDNET_WIDTH,
            blocks: 0,
            mfdbs,
            repconvs,
            factor: 4,
            activation: Activation::lrelu(),
            form,
            expand_ratio: 2,
        }
    }

    pub fn check(&self) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::InvalidConfig(m));
        self.activation
            .validate()
            .map_err(|e| GraphError::InvalidConfig(e.to_string()))?;
        if self.width == 0 {
            return bad("width must be positive".into());
        }
        match self.variant {
            Variant::Baseline => {
                if ![1, 2, 4].contains(&self.factor) {
                    return bad(format!(
                        "downsampling factor {} not in {{1, 2, 4}}",
                        self.factor
                    ));
                }
                if self.blocks == 0 {
                    return bad("baseline needs at least one block".into());
                }
                if self.factor == 4 && !self.width.is_multiple_of(2) {
                    return bad(format!("factor 4 needs an even width, got {}", self.width));
                }
            }
            v => {
                if self.factor != 4 {
                    return bad(format!("{v} requires downsampling factor 4"));
                }
                if !self.width.is_multiple_of(4) {
                    return bad(format!("MFA width {}/4 is not an integer", self.width));
                }
                if self.mfdbs == 0 || self.repconvs == 0 {
                    return bad("M and K must be positive".into());
                }
                if self.expand_ratio == 0 {
                    return bad("expand ratio must be positive".into());
                }
                let fixed = match v {
                    Variant::MfdnetS => Some((1, 1)),
                    Variant::Mfdnet => Some((3, 3)),
                    Variant::MfdnetL => Some((6, 3)),
                    _ => None,
                };
                if let Some((m, k)) = fixed {
                    if (self.mfdbs, self.repconvs) != (m, k) || self.width != Self::MFDNET_WIDTH {
                        return bad(format!(
                            "{v} is fixed at M={m}, K={k}, width {}",
                            Self::MFDNET_WIDTH
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}
