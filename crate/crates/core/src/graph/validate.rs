use std::collections::HashMap;

use super::{GraphError, GraphSpec, LayerId, LayerKind};
use crate::ops::Activation;
use crate::tensor::{Shape, TensorError};

/// Checks DAG structure and returns the output shape of every layer, in
/// layer order.
pub fn validate(g: &GraphSpec, input: Shape) -> Result<Vec<(LayerId, Shape)>, GraphError> {
    let order = check_structure(g)?;
    check_input(g, input)?;

    let mut shapes: Vec<Shape> = Vec::with_capacity(g.layers.len());
    let mut trace = Vec::with_capacity(g.layers.len());
    for layer in &g.layers {
        let shape_err = |source: TensorError| GraphError::Shape {
            layer: layer.id,
            source,
        };
        let s = match layer.input {
            None => input,
            Some(i) => shapes[order[&i]],
        };
        let out = match &layer.kind {
            LayerKind::Input | LayerKind::BranchPoint(_) => s,
            LayerKind::Conv(c) => {
                if s.c != c.in_ch {
                    return Err(shape_err(TensorError::DimMismatch {
                        dim: "input channels",
                        expected: c.in_ch,
                        actual: s.c,
                    }));
                }
                let dim = |size: usize, name| {
                    let padded = size + 2 * c.padding;
                    if padded < c.kernel {
                        Err(shape_err(TensorError::EmptyOutput {
                            dim: name,
                            size,
                            kernel: c.kernel,
                            padding: c.padding,
                        }))
                    } else {
                        Ok((padded - c.kernel) / c.stride + 1)
                    }
                };
                Shape::new(s.n, c.out_ch, dim(s.h, "height")?, dim(s.w, "width")?)
            }
            LayerKind::RepConv(r) => {
                if s.c != r.channels {
                    return Err(shape_err(TensorError::DimMismatch {
                        dim: "input channels",
                        expected: r.channels,
                        actual: s.c,
                    }));
                }
                s
            }
            LayerKind::Activation(a) => {
                a.validate().map_err(shape_err)?;
                if let Activation::Prelu(slopes) = a {
                    if slopes.len() != s.c {
                        return Err(shape_err(TensorError::DimMismatch {
                            dim: "PReLU slope count",
                            expected: s.c,
                            actual: slopes.len(),
                        }));
                    }
                }
                s
            }
            LayerKind::HaarDown => {
                for (dim, v) in [("height", s.h), ("width", s.w)] {
                    if v % 2 != 0 {
                        return Err(shape_err(TensorError::NotDivisible {
                            dim,
                            value: v,
                            divisor: 2,
                        }));
                    }
                }
                Shape::new(s.n, 4 * s.c, s.h / 2, s.w / 2)
            }
            LayerKind::BilinearUp2 => Shape::new(s.n, s.c, 2 * s.h, 2 * s.w),
            LayerKind::PixelShuffle(r) => {
                let rr = r * r;
                if *r == 0 || s.c % rr != 0 {
                    return Err(shape_err(TensorError::NotDivisible {
                        dim: "channels",
                        value: s.c,
                        divisor: rr,
                    }));
                }
                Shape::new(s.n, s.c / rr, s.h * r, s.w * r)
            }
            LayerKind::Mul { src } | LayerKind::Add { src } => {
                let other = shapes[order[src]];
                if other != s {
                    return Err(shape_err(TensorError::ShapeMismatch {
                        left: s,
                        right: other,
                    }));
                }
                s
            }
        };
        shapes.push(out);
        trace.push((layer.id, out));
    }
    Ok(trace)
}

/// Verifies DAG invariants; returns id -> position.
pub(crate) fn check_structure(g: &GraphSpec) -> Result<HashMap<LayerId, usize>, GraphError> {
    let first = g.layers.first().ok_or(GraphError::Empty)?;
    if first.kind != LayerKind::Input || first.input.is_some() {
        return Err(GraphError::BadInput(first.id));
    }
    let mut pos = HashMap::with_capacity(g.layers.len());
    for (i, l) in g.layers.iter().enumerate() {
        if pos.insert(l.id, i).is_some() {
            return Err(GraphError::DuplicateId(l.id));
        }
    }
    let mut consumed = vec![false; g.layers.len()];
    for (i, l) in g.layers.iter().enumerate().skip(1) {
        if l.kind == LayerKind::Input {
            return Err(GraphError::BadInput(l.id));
        }
        let main = l.input.ok_or(GraphError::BadInput(l.id))?;
        for target in std::iter::once(main).chain(l.kind.side_input()) {
            match pos.get(&target) {
                None => {
                    return Err(GraphError::Dangling {
                        layer: l.id,
                        target,
                    })
                }
                Some(&p) if p >= i => {
                    return Err(GraphError::Cycle {
                        layer: l.id,
                        target,
                    })
                }
                Some(&p) => consumed[p] = true,
            }
        }
    }
    let last = g.layers.len() - 1;
    if let Some(p) = consumed[..last].iter().position(|c| !c) {
        return Err(GraphError::ExtraOutput(g.layers[p].id));
    }
    Ok(pos)
}

pub(crate) fn check_input(g: &GraphSpec, input: Shape) -> Result<(), GraphError> {
    if input.c != g.in_channels {
        return Err(GraphError::Shape {
            layer: g.layers[0].id,
            source: TensorError::DimMismatch {
                dim: "input channels",
                expected: g.in_channels,
                actual: input.c,
            },
        });
    }
    for (dim, value) in [("height", input.h), ("width", input.w)] {
        if value == 0 || value % g.required_multiple != 0 {
            return Err(GraphError::NotDivisible {
                dim,
                value,
                multiple: g.required_multiple,
            });
        }
    }
    Ok(())
}
