use std::collections::HashMap;

use super::validate::{check_input, check_structure};
use super::{ConvSpec, GraphError, GraphSpec, LayerId, LayerKind};
use crate::ops::{self, ConvParams};
use crate::reparam::RepConvBranch;
use crate::tensor::{Tensor, TensorError};
use crate::weights::WeightStore;

pub(crate) fn conv_params(
    spec: &ConvSpec,
    w: &WeightStore,
    layer: LayerId,
) -> Result<ConvParams, GraphError> {
    let fetch = |name: String| {
        w.get(&name).ok_or(GraphError::MissingWeight {
            layer,
            name: name.clone(),
        })
    };
    let wt = fetch(spec.weight_name())?;
    let expected = vec![spec.out_ch, spec.in_ch, spec.kernel, spec.kernel];
    if wt.dims != expected {
        return Err(GraphError::WeightShape {
            name: spec.weight_name(),
            expected,
            actual: wt.dims.clone(),
        });
    }
    let bias = if spec.bias {
        let b = fetch(spec.bias_name())?;
        if b.dims != [spec.out_ch] {
            return Err(GraphError::WeightShape {
                name: spec.bias_name(),
                expected: vec![spec.out_ch],
                actual: b.dims.clone(),
            });
        }
        Some(b.data.clone())
    } else {
        None
    };
    let shape_err = |source: TensorError| GraphError::Shape { layer, source };
    let kernel = wt.to_tensor().map_err(shape_err)?;
    ConvParams::new(kernel, bias, spec.stride, spec.padding).map_err(shape_err)
}

/// Runs the graph on `x` in layer order. Intermediate tensors are dropped
/// after their last consumer.
pub fn forward(g: &GraphSpec, w: &WeightStore, x: &Tensor) -> Result<Tensor, GraphError> {
    let pos = check_structure(g)?;
    check_input(g, x.shape())?;

    let n = g.layers.len();
    let mut last_use = vec![0usize; n];
    for (i, l) in g.layers.iter().enumerate() {
        for t in l.input.into_iter().chain(l.kind.side_input()) {
            last_use[pos[&t]] = i;
        }
    }
    last_use[n - 1] = n;

    let mut vals: Vec<Option<Tensor>> = vec![None; n];
    for (i, layer) in g.layers.iter().enumerate() {
        let err = |source: TensorError| GraphError::Shape {
            layer: layer.id,
            source,
        };
        fn input<'a>(
            vals: &'a [Option<Tensor>],
            pos: &HashMap<LayerId, usize>,
            id: LayerId,
        ) -> &'a Tensor {
            vals[pos[&id]]
                .as_ref()
                .expect("producer evaluated before consumer")
        }
        let out = match &layer.kind {
            LayerKind::Input => x.clone(),
            kind => {
                let src = input(
                    &vals,
                    &pos,
                    layer.input.expect("non-input layer has an input"),
                );
                match kind {
                    LayerKind::Input => unreachable!(),
                    LayerKind::BranchPoint(_) => src.clone(),
                    LayerKind::Conv(c) => {
                        let p = conv_params(c, w, layer.id)?;
                        ops::conv2d(src, &p).map_err(err)?
                    }
                    LayerKind::RepConv(r) => {
                        let branch = RepConvBranch::from_store(r, w, layer.id)?;
                        branch.forward(src).map_err(err)?
                    }
                    LayerKind::Activation(a) => ops::apply_activation(src, a).map_err(err)?,
                    LayerKind::HaarDown => ops::haar_forward(src).map_err(err)?,
                    LayerKind::BilinearUp2 => ops::bilinear_upsample_x2(src).map_err(err)?,
                    LayerKind::PixelShuffle(r) => ops::pixel_shuffle(src, *r).map_err(err)?,
                    LayerKind::Mul { src: side } => {
                        ops::elementwise_mul(src, input(&vals, &pos, *side)).map_err(err)?
                    }
                    LayerKind::Add { src: side } => {
                        ops::elementwise_add(src, input(&vals, &pos, *side)).map_err(err)?
                    }
                }
            }
        };
        vals[i] = Some(out);
        for (j, slot) in vals.iter_mut().enumerate().take(i) {
            if last_use[j] == i {
                *slot = None;
            }
        }
    }
    Ok(vals.pop().flatten().expect("output evaluated"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_baseline, build_mfa, build_mfdnet, Form, ModelConfig, Variant};
    use crate::tensor::Shape;
    use crate::weights::{init_random, InitScheme, InitSpec};

    fn ramp(shape: Shape) -> Tensor {
        Tensor::from_fn(shape, |_, c, y, x| ((c * 7 + y * 3 + x) % 17) as f32 / 16.0).unwrap()
    }

    #[test]
    fn zero_weights_give_identity_for_every_variant() {
        let mut graphs = vec![
            build_baseline(16, 3, 1).unwrap(),
            build_baseline(16, 3, 2).unwrap(),
            build_baseline(16, 3, 4).unwrap(),
        ];
        for v in Variant::MFDNET_FAMILY {
            for f in [Form::Train, Form::Deploy] {
                graphs.push(build_mfdnet(&ModelConfig::mfdnet(v, f)).unwrap());
            }
        }
        let x = ramp(Shape::new(1, 3, 64, 64));
        for g in graphs {
            let w = init_random(&g, &InitSpec::new(0, InitScheme::Zeros));
            let y = forward(&g, &w, &x).unwrap();
            assert_eq!(y, x, "{}", g.label);
        }
    }

    #[test]
    fn closed_gate_zeroes_mfa_output() {
        let g = build_mfa(48).unwrap();
        let w = init_random(&g, &InitSpec::new(1, InitScheme::Zeros));
        let x = ramp(Shape::new(1, 48, 32, 32));
        let y = forward(&g, &w, &x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_weight_is_reported_with_name() {
        let g = build_baseline(8, 2, 2).unwrap();
        let mut w = init_random(&g, &InitSpec::new(0, InitScheme::KaimingUniform));
        w.remove("tail.conv.b");
        let err = forward(&g, &w, &ramp(Shape::new(1, 3, 8, 8))).unwrap_err();
        assert!(matches!(err, GraphError::MissingWeight { ref name, .. } if name == "tail.conv.b"));
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let g = build_mfdnet(&ModelConfig::mfdnet(Variant::MfdnetS, Form::Train)).unwrap();
        let w = init_random(&g, &InitSpec::new(3, InitScheme::KaimingUniform));
        let x = ramp(Shape::new(1, 3, 32, 48));
        assert_eq!(forward(&g, &w, &x).unwrap(), forward(&g, &w, &x).unwrap());
    }
}
