//! Reference executor for desk-scale tensors.
//!
//! Three precisions: plain f32, f32 with every tensor rounded to the binary16
//! grid after each node, and fixed-point execution driven by a graph's
//! [`QuantInfo`]. A fourth, fake-quantized float mode backs
//! [`crate::quant::fake_quant_run`].
//!
//! In fixed-point mode the MAC kernels (conv, transpose conv, fully connected)
//! run on integer codes with integer accumulators. Every other op dequantizes
//! its inputs, applies the float kernel, and requantizes to the output scheme.

pub(crate) mod kernels;
pub(crate) mod qkernels;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::{Graph, GraphError, Node, OpKind, Shape};
use crate::quant::{round_half_even, QuantInfo, QuantScheme};
use crate::tensor::Tensor;
use kernels::ConvGeom;
use qkernels::{Accumulator, QConv, QTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    EmulatedF16,
    Quant,
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Precision::F32),
            "f16" => Ok(Precision::EmulatedF16),
            "quant" => Ok(Precision::Quant),
            other => Err(format!("unknown precision `{other}` (f32|f16|quant)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum InterpError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("expected {expected} input tensors, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("shape mismatch for input `{name}`: graph expects {expected:?}, got {got:?}")]
    ShapeMismatch { name: String, expected: Shape, got: Shape },
    #[error("node `{node}` references missing weights `{name}`")]
    MissingWeights { node: String, name: String },
    #[error("graph has no quantization parameters")]
    NotQuantized,
    #[error("no quantization scheme for `{0}`")]
    MissingScheme(String),
}

/// Result of one execution: the retained tensors and the MAC-kernel multiply count.
#[derive(Clone, Debug)]
pub struct Execution {
    pub values: BTreeMap<String, Tensor>,
    pub multiplies: u64,
}

#[derive(Clone, Copy)]
pub(crate) enum Mode<'a> {
    Float { f16: bool },
    FakeQuant(&'a QuantInfo),
    Quant(&'a QuantInfo),
}

/// Run the graph, returning its outputs in `graph.outputs` order.
pub fn run(graph: &Graph, inputs: &[Tensor], precision: Precision) -> Result<Vec<Tensor>, InterpError> {
    let mode = match precision {
        Precision::F32 => Mode::Float { f16: false },
        Precision::EmulatedF16 => Mode::Float { f16: true },
        Precision::Quant => Mode::Quant(graph.quant.as_ref().ok_or(InterpError::NotQuantized)?),
    };
    let exec = execute(graph, inputs, mode, false)?;
    Ok(collect_outputs(graph, exec))
}

/// Float execution that keeps every intermediate tensor.
pub fn trace(graph: &Graph, inputs: &[Tensor]) -> Result<Execution, InterpError> {
    execute(graph, inputs, Mode::Float { f16: false }, true)
}

/// Number of scalar multiplies performed by the MAC kernels (padding taps included).
pub fn count_multiplies(graph: &Graph, inputs: &[Tensor]) -> Result<u64, InterpError> {
    Ok(execute(graph, inputs, Mode::Float { f16: false }, false)?.multiplies)
}

pub(crate) fn collect_outputs(graph: &Graph, mut exec: Execution) -> Vec<Tensor> {
    graph
        .outputs
        .iter()
        .map(|o| exec.values.remove(o).expect("outputs are retained"))
        .collect()
}

fn round_f16(t: &mut Tensor) {
    for v in t.data.iter_mut() {
        *v = half::f16::from_f32(*v).to_f32();
    }
}

fn fake_tensor(t: &mut Tensor, s: &QuantScheme) {
    for v in t.data.iter_mut() {
        *v = s.fake(*v);
    }
}

fn quantize_tensor(t: &Tensor, s: &QuantScheme) -> QTensor {
    QTensor {
        shape: t.shape,
        data: t.data.iter().map(|&v| s.quantize(v as f64)).collect(),
        scheme: *s,
    }
}

fn dequantize_tensor(q: &QTensor) -> Tensor {
    Tensor::new(q.shape, q.data.iter().map(|&v| q.scheme.dequantize(v) as f32).collect())
}

fn scheme<'a>(info: &'a QuantInfo, name: &str) -> Result<&'a QuantScheme, InterpError> {
    info.schemes
        .get(name)
        .ok_or_else(|| InterpError::MissingScheme(name.to_string()))
}

/// Resolve shapes if needed and check inputs against the graph's input specs.
fn prepare<'g>(graph: &'g Graph, inputs: &[Tensor]) -> Result<std::borrow::Cow<'g, Graph>, InterpError> {
    if inputs.len() != graph.inputs.len() {
        return Err(InterpError::InputCount {
            expected: graph.inputs.len(),
            got: inputs.len(),
        });
    }
    for (spec, t) in graph.inputs.iter().zip(inputs) {
        if spec.shape != t.shape {
            return Err(InterpError::ShapeMismatch {
                name: spec.name.clone(),
                expected: spec.shape,
                got: t.shape,
            });
        }
    }
    if graph.is_resolved() {
        Ok(std::borrow::Cow::Borrowed(graph))
    } else {
        Ok(std::borrow::Cow::Owned(graph.resolved()?))
    }
}

fn weight<'a>(graph: &'a Graph, node: &Node, name: &str) -> Result<&'a [f32], InterpError> {
    graph
        .weights
        .get(name)
        .map(|w| w.data.as_slice())
        .ok_or_else(|| InterpError::MissingWeights {
            node: node.id.clone(),
            name: name.to_string(),
        })
}

pub(crate) fn execute(graph: &Graph, inputs: &[Tensor], mode: Mode<'_>, keep_all: bool) -> Result<Execution, InterpError> {
    let graph = prepare(graph, inputs)?;
    let graph = graph.as_ref();

    // Index of the last node reading each tensor; outputs live to the end.
    let mut last_use: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        for t in &n.inputs {
            last_use.insert(t.as_str(), i);
        }
    }
    for o in &graph.outputs {
        last_use.insert(o.as_str(), usize::MAX);
    }

    let mut multiplies = 0u64;
    let mut values: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut qvalues: BTreeMap<String, QTensor> = BTreeMap::new();

    for (spec, t) in graph.inputs.iter().zip(inputs) {
        match mode {
            Mode::Float { f16 } => {
                let mut t = t.clone();
                if f16 {
                    round_f16(&mut t);
                }
                values.insert(spec.name.clone(), t);
            }
            Mode::FakeQuant(info) => {
                let mut t = t.clone();
                fake_tensor(&mut t, scheme(info, &spec.name)?);
                values.insert(spec.name.clone(), t);
            }
            Mode::Quant(info) => {
                qvalues.insert(spec.name.clone(), quantize_tensor(t, scheme(info, &spec.name)?));
            }
        }
    }

    for (i, node) in graph.nodes.iter().enumerate() {
        match mode {
            Mode::Quant(info) => {
                let ins: Vec<&QTensor> = node.inputs.iter().map(|t| &qvalues[t]).collect();
                let out = quant_node(graph, node, &ins, info, &mut multiplies)?;
                qvalues.insert(node.output.clone(), out);
            }
            _ => {
                let ins: Vec<&Tensor> = node.inputs.iter().map(|t| &values[t]).collect();
                let mut out = match mode {
                    Mode::FakeQuant(info) => {
                        let (filter, bias) = fake_weights(graph, node, info)?;
                        float_node(graph, node, &ins, filter.as_deref(), bias.as_deref(), &mut multiplies)?
                    }
                    _ => float_node(graph, node, &ins, None, None, &mut multiplies)?,
                };
                match mode {
                    Mode::Float { f16: true } => round_f16(&mut out),
                    Mode::FakeQuant(info) => fake_tensor(&mut out, scheme(info, &node.output)?),
                    _ => {}
                }
                values.insert(node.output.clone(), out);
            }
        }
        if !keep_all {
            for t in &node.inputs {
                if last_use.get(t.as_str()) == Some(&i) {
                    values.remove(t);
                    qvalues.remove(t);
                }
            }
        }
    }

    for (k, q) in qvalues {
        values.insert(k, dequantize_tensor(&q));
    }
    Ok(Execution { values, multiplies })
}

/// Fake-quantized filter (or slope) and bias for one node. Biases snap to the
/// integer grid with scale `s_in * s_filter`, as in fixed-point execution.
fn fake_weights(graph: &Graph, node: &Node, info: &QuantInfo) -> Result<(Option<Vec<f32>>, Option<Vec<f32>>), InterpError> {
    let Some(w) = &node.weights else {
        return Ok((None, None));
    };
    let fs = scheme(info, &w.filter)?;
    let filter: Vec<f32> = weight(graph, node, &w.filter)?.iter().map(|&v| fs.fake(v)).collect();
    let bias = match &w.bias {
        None => None,
        Some(b) => {
            let s_in = scheme(info, &node.inputs[0])?.scale;
            let sb = s_in * fs.scale;
            Some(
                weight(graph, node, b)?
                    .iter()
                    .map(|&v| (bias_code(v, sb, info.bits) as f64 * sb) as f32)
                    .collect(),
            )
        }
    };
    Ok((Some(filter), bias))
}

/// Bias code on the `s_in * s_filter` grid. 8-bit graphs saturate to int32;
/// 16-bit scales are small enough that int32 would clip ordinary biases.
pub(crate) fn bias_code(v: f32, scale: f64, bits: u8) -> i64 {
    let q = round_half_even(v as f64 / scale);
    if bits <= 8 {
        q.clamp(i32::MIN as i64, i32::MAX as i64)
    } else {
        q
    }
}

/// Evaluate one node in float. `filter`/`bias` override the weight store.
fn float_node(
    graph: &Graph,
    node: &Node,
    ins: &[&Tensor],
    filter: Option<&[f32]>,
    bias: Option<&[f32]>,
    muls: &mut u64,
) -> Result<Tensor, InterpError> {
    let x = ins[0];
    let stored = |name: &str| weight(graph, node, name);
    let filter_and_bias = || -> Result<(&[f32], Option<&[f32]>, Vec<usize>), InterpError> {
        let w = node.weights.as_ref().expect("validated");
        let shape = graph
            .weights
            .get(&w.filter)
            .map(|t| t.shape.clone())
            .ok_or_else(|| InterpError::MissingWeights {
                node: node.id.clone(),
                name: w.filter.clone(),
            })?;
        let f = match filter {
            Some(f) => f,
            None => stored(&w.filter)?,
        };
        let b = match (&w.bias, bias) {
            (Some(_), Some(b)) => Some(b),
            (Some(name), None) => Some(stored(name)?),
            (None, _) => None,
        };
        Ok((f, b, shape))
    };
    Ok(match node.kind {
        OpKind::Conv2d => {
            let (f, b, shape) = filter_and_bias()?;
            let (kh, kw, s) = node.window().expect("validated");
            let g = ConvGeom::conv(x.shape, shape[0], kh, kw, s, node.padding().expect("validated"));
            let hwio = kernels::to_hwio(f, shape[0], kh, kw, shape[3]);
            kernels::conv2d(x, &hwio, b, &g, muls)
        }
        OpKind::TransposeConv2d => {
            let (f, b, shape) = filter_and_bias()?;
            let (kh, kw, s) = node.window().expect("validated");
            let g = ConvGeom::transpose(x.shape, shape[0], kh, kw, s);
            let hwio = kernels::to_hwio(f, shape[0], kh, kw, shape[3]);
            kernels::transpose_conv2d(x, &hwio, b, &g, muls)
        }
        OpKind::FullyConnected => {
            let (f, b, shape) = filter_and_bias()?;
            kernels::fully_connected(x, f, b, shape[0], muls)
        }
        OpKind::DepthToSpace => kernels::depth_to_space(x, node.int_attr("block_size").expect("validated")),
        OpKind::SpaceToDepth => kernels::space_to_depth(x, node.int_attr("block_size").expect("validated")),
        OpKind::ResizeBilinear => kernels::resize_bilinear(x, node.int_attr("scale").expect("validated")),
        OpKind::ResizeNearest => kernels::resize_nearest(x, node.int_attr("scale").expect("validated")),
        OpKind::Concatenation => kernels::concat(ins),
        OpKind::Add => kernels::zip_map(ins[0], ins[1], |a, b| a + b),
        OpKind::Mul => kernels::zip_map(ins[0], ins[1], |a, b| a * b),
        OpKind::Relu => kernels::relu(x),
        OpKind::Prelu => {
            let (slope, _, _) = filter_and_bias()?;
            kernels::prelu(x, slope)
        }
        OpKind::MaxPool2d | OpKind::AvgPool2d => {
            let (kh, kw, s) = node.window().expect("validated");
            kernels::pool(x, kh, kw, s, node.padding().expect("validated"), node.kind == OpKind::MaxPool2d)
        }
    })
}

fn int_weights<'a>(info: &'a QuantInfo, node: &Node, name: &str) -> Result<&'a [i64], InterpError> {
    info.qweights
        .get(name)
        .map(|t| t.data.as_slice())
        .ok_or_else(|| InterpError::MissingWeights {
            node: node.id.clone(),
            name: name.to_string(),
        })
}

fn quant_mac_node<A: Accumulator>(
    graph: &Graph,
    node: &Node,
    x: &QTensor,
    info: &QuantInfo,
    muls: &mut u64,
) -> Result<QTensor, InterpError> {
    let w = node.weights.as_ref().expect("validated");
    let fs = scheme(info, &w.filter)?;
    let out = *scheme(info, &node.output)?;
    let shape = &graph
        .weights
        .get(&w.filter)
        .ok_or_else(|| InterpError::MissingWeights {
            node: node.id.clone(),
            name: w.filter.clone(),
        })?
        .shape;
    let centered: Vec<A> = int_weights(info, node, &w.filter)?
        .iter()
        .map(|&q| A::from_i64(q - fs.zero_point as i64))
        .collect();
    let bias = match &w.bias {
        Some(b) => Some(int_weights(info, node, b)?),
        None => None,
    };
    let multiplier = x.scheme.scale * fs.scale / out.scale;
    Ok(match node.kind {
        OpKind::FullyConnected => {
            let k = QConv { hwio: &centered, bias, multiplier, out };
            qkernels::fully_connected(x, &k, shape[0], muls)
        }
        kind => {
            let (kh, kw, s) = node.window().expect("validated");
            let hwio = kernels::to_hwio(&centered, shape[0], kh, kw, shape[3]);
            let k = QConv { hwio: &hwio, bias, multiplier, out };
            if kind == OpKind::Conv2d {
                let g = ConvGeom::conv(x.shape, shape[0], kh, kw, s, node.padding().expect("validated"));
                qkernels::conv2d(x, &k, &g, muls)
            } else {
                let g = ConvGeom::transpose(x.shape, shape[0], kh, kw, s);
                qkernels::transpose_conv2d(x, &k, &g, muls)
            }
        }
    })
}

fn quant_node(graph: &Graph, node: &Node, ins: &[&QTensor], info: &QuantInfo, muls: &mut u64) -> Result<QTensor, InterpError> {
    if node.kind.has_filter() {
        return if info.bits == 8 {
            quant_mac_node::<i32>(graph, node, ins[0], info, muls)
        } else {
            quant_mac_node::<i64>(graph, node, ins[0], info, muls)
        };
    }
    let out = *scheme(info, &node.output)?;
    let real: Vec<Tensor> = ins.iter().map(|q| dequantize_tensor(q)).collect();
    let refs: Vec<&Tensor> = real.iter().collect();
    let slope = match node.kind {
        OpKind::Prelu => {
            let name = &node.weights.as_ref().expect("validated").filter;
            let s = scheme(info, name)?;
            Some(
                int_weights(info, node, name)?
                    .iter()
                    .map(|&q| s.dequantize(q as i32) as f32)
                    .collect::<Vec<_>>(),
            )
        }
        _ => None,
    };
    let y = float_node(graph, node, &refs, slope.as_deref(), None, muls)?;
    Ok(quantize_tensor(&y, &out))
}

#[cfg(test)]
mod tests;
