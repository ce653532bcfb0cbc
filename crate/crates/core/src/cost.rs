//! Analytic MACs, parameter and memory-traffic accounting.
//!
//! Traffic is counted per layer as the bytes it reads (input activations
//! and, optionally, its parameters) plus the bytes it writes. Which layers
//! contribute traffic is set by a [`CostConvention`]; see `CALIBRATION.md`
//! at the repository root for how the `calibrated` preset was chosen.

use std::fmt::Write;

use crate::graph::{validate, GraphError, GraphSpec, LayerKind};
use crate::ops::Activation;
use crate::tensor::Shape;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostConvention {
    /// 4 for f32 traffic, 2 for f16.
    pub bytes_per_elem: u64,
    /// Standalone activation layers read and write their tensor.
    pub count_activations_as_ops: bool,
    /// Parameter tensors are read once per layer.
    pub count_param_reads: bool,
    /// Residual adds, attention multiplies and the RepConv skip add.
    pub count_residual_adds: bool,
    /// LReLU and GELU are fused into the producing conv (no traffic).
    pub fuse_leaky_activations: bool,
    pub count_bilinear: bool,
}

impl Default for CostConvention {
    /// Every layer counted, f32.
    fn default() -> Self {
        Self {
            bytes_per_elem: 4,
            count_activations_as_ops: true,
            count_param_reads: true,
            count_residual_adds: true,
            fuse_leaky_activations: false,
            count_bilinear: true,
        }
    }
}

impl CostConvention {
    /// The convention that reproduces the published baseline and MFDNet
    /// memory columns: convs, ReLU/PReLU, Haar and PixelShuffle counted;
    /// LReLU/GELU fused; adds, multiplies and bilinear resampling free.
    pub fn calibrated() -> Self {
        Self {
            bytes_per_elem: 4,
            count_activations_as_ops: true,
            count_param_reads: true,
            count_residual_adds: false,
            fuse_leaky_activations: true,
            count_bilinear: false,
        }
    }

    fn counts_activation(&self, a: &Activation) -> bool {
        self.count_activations_as_ops
            && !(self.fuse_leaky_activations
                && matches!(a, Activation::LeakyRelu(_) | Activation::Gelu))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCost {
    pub id: usize,
    pub kind: String,
    pub macs: u64,
    pub params: u64,
    /// Bytes.
    pub read: u64,
    /// Bytes.
    pub write: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub macs: u64,
    pub params: u64,
    pub mem_read: u64,
    pub mem_write: u64,
    pub mem_total: u64,
    pub per_layer: Vec<LayerCost>,
}

impl CostReport {
    pub fn gmacs(&self) -> f64 {
        self.macs as f64 / 1e9
    }

    /// Total traffic in units of 10^6 bytes.
    pub fn memory_mb(&self) -> f64 {
        self.mem_total as f64 / 1e6
    }
}

#[derive(Default)]
struct Tally {
    macs: u64,
    params: u64,
    read: u64,
    write: u64,
}

impl Tally {
    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        cv: &CostConvention,
        in_elems: u64,
        out_elems: u64,
        in_ch: u64,
        k: u64,
        bias: bool,
        out_ch: u64,
    ) {
        let params = out_ch * in_ch * k * k + if bias { out_ch } else { 0 };
        // per output element: in_ch * k^2 multiply-accumulates
        self.macs += out_elems * in_ch * k * k;
        self.params += params;
        self.read += in_elems + if cv.count_param_reads { params } else { 0 };
        self.write += out_elems;
    }

    fn rw(&mut self, read: u64, write: u64) {
        self.read += read;
        self.write += write;
    }
}

/// Costs `g` at `input` under convention `cv`.
pub fn estimate(
    g: &GraphSpec,
    input: Shape,
    cv: &CostConvention,
) -> Result<CostReport, GraphError> {
    let trace = validate(g, input)?;
    let bpe = cv.bytes_per_elem;
    let mut per_layer = Vec::with_capacity(g.layers.len());
    for (idx, layer) in g.layers.iter().enumerate() {
        let out = trace[idx].1;
        let inp = match layer.input {
            Some(i) => trace[g.layers.iter().position(|l| l.id == i).expect("validated")].1,
            None => input,
        };
        let (ie, oe) = (inp.numel() as u64, out.numel() as u64);
        let mut t = Tally::default();
        match &layer.kind {
            LayerKind::Input | LayerKind::BranchPoint(_) => {}
            LayerKind::Conv(c) => t.conv(
                cv,
                ie,
                oe,
                c.in_ch as u64,
                c.kernel as u64,
                c.bias,
                c.out_ch as u64,
            ),
            LayerKind::RepConv(r) => {
                let (c, e) = (r.channels as u64, r.expanded() as u64);
                let plane = inp.n as u64 * inp.plane() as u64;
                t.conv(cv, c * plane, e * plane, c, 1, false, e);
                t.conv(cv, e * plane, e * plane, e, 3, true, e);
                t.conv(cv, e * plane, c * plane, e, 1, true, c);
                if cv.count_residual_adds {
                    t.rw(2 * oe, oe);
                }
            }
            LayerKind::Activation(a) => {
                if let Activation::Prelu(s) = a {
                    t.params += s.len() as u64;
                }
                if cv.counts_activation(a) {
                    let p = if cv.count_param_reads { t.params } else { 0 };
                    t.rw(ie + p, oe);
                }
            }
            LayerKind::HaarDown | LayerKind::PixelShuffle(_) => t.rw(ie, oe),
            LayerKind::BilinearUp2 => {
                if cv.count_bilinear {
                    t.rw(ie, oe);
                }
            }
            LayerKind::Mul { .. } | LayerKind::Add { .. } => {
                if cv.count_residual_adds {
                    t.rw(2 * oe, oe);
                }
            }
        }
        per_layer.push(LayerCost {
            id: layer.id,
            kind: layer.kind.label(),
            macs: t.macs,
            params: t.params,
            read: t.read * bpe,
            write: t.write * bpe,
        });
    }
    let sum = |f: fn(&LayerCost) -> u64| per_layer.iter().map(f).sum::<u64>();
    let (mem_read, mem_write) = (sum(|l| l.read), sum(|l| l.write));
    Ok(CostReport {
        macs: sum(|l| l.macs),
        params: sum(|l| l.params),
        mem_read,
        mem_write,
        mem_total: mem_read + mem_write,
        per_layer,
    })
}

/// Aligned text table (Model, MACs/G, Memory/M, Params/K), rows in the
/// order given.
pub fn compare(rows: &[(&str, &CostReport)]) -> String {
    let width = rows
        .iter()
        .map(|(l, _)| l.len())
        .chain(std::iter::once("Model".len()))
        .max()
        .unwrap_or(5);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>9}  {:>9}  {:>9}",
        "Model", "MACs/G", "Memory/M", "Params/K"
    );
    for (label, r) in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>9.2}  {:>9.0}  {:>9.1}",
            label,
            r.gmacs(),
            r.memory_mb(),
            r.params as f64 / 1e3
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{
        build_baseline, build_mfa, build_mfdnet, ConvSpec, Form, Layer, ModelConfig, Variant,
    };

    fn single_conv(c: usize) -> GraphSpec {
        GraphSpec {
            label: "conv".into(),
            form: Form::Deploy,
            in_channels: c,
            required_multiple: 1,
            layers: vec![
                Layer {
                    id: 0,
                    input: None,
                    kind: LayerKind::Input,
                },
                Layer {
                    id: 1,
                    input: Some(0),
                    kind: LayerKind::Conv(ConvSpec::conv3x3("c", c, c, 1)),
                },
            ],
        }
    }

    #[test]
    fn single_conv_macs() {
        let r = estimate(
            &single_conv(48),
            Shape::new(1, 48, 180, 320),
            &CostConvention::default(),
        )
        .unwrap();
        assert_eq!(r.macs, 1_194_393_600);
        assert_eq!(r.params, 48 * 48 * 9 + 48);
        let elems = 48 * 180 * 320;
        assert_eq!(r.mem_read, 4 * (elems + r.params));
        assert_eq!(r.mem_write, 4 * elems);
    }

    #[test]
    fn totals_match_rows() {
        let g = build_mfdnet(&ModelConfig::mfdnet(Variant::Mfdnet, Form::Train)).unwrap();
        let r = estimate(&g, Shape::new(1, 3, 64, 64), &CostConvention::default()).unwrap();
        assert_eq!(r.mem_total, r.mem_read + r.mem_write);
        assert_eq!(r.macs, r.per_layer.iter().map(|l| l.macs).sum::<u64>());
        assert_eq!(r.per_layer.len(), g.layers.len());
    }

    #[test]
    fn mfa_macs_at_720p_body() {
        // conv0 48->12 at 90x160, conv1 12->12 at 90x160, conv2 12->48 at 90x160
        let r = estimate(
            &build_mfa(48).unwrap(),
            Shape::new(1, 48, 180, 320),
            &CostConvention::default(),
        )
        .unwrap();
        let expected = 9 * 14_400 * (48 * 12 + 12 * 12 + 12 * 48);
        assert_eq!(r.macs, expected as u64);
    }

    #[test]
    fn compare_keeps_order() {
        let g = build_baseline(16, 2, 2).unwrap();
        let r = estimate(&g, Shape::new(1, 3, 64, 64), &CostConvention::default()).unwrap();
        let t = compare(&[("b", &r), ("a", &r)]);
        let lines: Vec<_> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Model"));
        assert!(lines[1].starts_with("b "));
        assert!(lines[2].starts_with("a "));
    }

    #[test]
    fn invalid_graph_is_an_error() {
        let g = build_baseline(16, 2, 4).unwrap();
        assert!(estimate(&g, Shape::new(1, 3, 30, 64), &CostConvention::default()).is_err());
    }
}
