//! Portability rewrites: swap operators a device cannot run for compositions
//! it can.
//!
//! Rewrites keep every tensor name and shape outside the replaced node, but
//! not its function: replacement weights are freshly initialized from the
//! graph seed and are expected to be retrained.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::graph::{validate, Graph, GraphError, Node, OpKind, Padding, WeightTensor};
use crate::zoo::{Activation, Upsample};

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("transpose conv `{node}` has stride {stride}; only stride 2 can be rewritten")]
    UnsupportedStride { node: String, stride: usize },
    #[error("`{0}` is not a transpose conv replacement (expected d2s or bilinear)")]
    InvalidTarget(String),
    #[error("graph carries quantization parameters; rewrite the float graph and quantize afterwards")]
    Quantized,
    #[error("unknown pass `{0}` (tc2d2s|tc2bilinear|relu2prelu|prelu2relu)")]
    UnknownPass(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Replace every stride-2 TRANSPOSE_CONV_2D.
///
/// `DepthToSpace`: 1x1 conv to 4*C_out, then DEPTH_TO_SPACE block 2.
/// `ResizeBilinear`: RESIZE_BILINEAR x2, then 3x3 conv to C_out.
/// The last node of the replacement keeps the original id and output name.
pub fn replace_transpose_conv(graph: &Graph, target: Upsample) -> Result<Graph, RewriteError> {
    if target == Upsample::TransposeConv {
        return Err(RewriteError::InvalidTarget(target.short().to_string()));
    }
    check_valid(graph)?;
    if graph.count_kind(OpKind::TransposeConv2d) == 0 {
        return Ok(graph.clone());
    }
    if graph.quant.is_some() {
        return Err(RewriteError::Quantized);
    }
    let seed = graph.seed;
    let mut g = graph.clone();
    let mut nodes = Vec::with_capacity(g.nodes.len() + 4);
    for node in std::mem::take(&mut g.nodes) {
        if node.kind != OpKind::TransposeConv2d {
            nodes.push(node);
            continue;
        }
        let stride = node.int_attr("stride").unwrap_or(0);
        if stride != 2 {
            return Err(RewriteError::UnsupportedStride { node: node.id, stride });
        }
        let w = node.weights.as_ref().expect("validated graphs give TC a filter");
        let fshape = &graph.weights[&w.filter].shape;
        let (cout, cin) = (fshape[0], fshape[3]);
        g.weights.remove(&w.filter);
        if let Some(b) = &w.bias {
            g.weights.remove(b);
        }
        let x = node.inputs[0].clone();
        match target {
            Upsample::DepthToSpace => {
                let expand = format!("{}/expand", node.id);
                nodes.push(conv_node(&mut g, &expand, &x, &expand, 4 * cout, cin, 1, seed));
                nodes.push(
                    Node::new(&node.id, OpKind::DepthToSpace, vec![expand], &node.output).with_attr("block_size", 2usize),
                );
            }
            _ => {
                let resize = format!("{}/resize", node.id);
                nodes.push(
                    Node::new(&resize, OpKind::ResizeBilinear, vec![x], &resize).with_attr("scale", 2usize),
                );
                nodes.push(conv_node(&mut g, &node.id, &resize, &node.output, cout, cin, 3, seed));
            }
        }
    }
    g.nodes = nodes;
    g.tensors.clear();
    Ok(g.resolved()?)
}

#[allow(clippy::too_many_arguments)]
fn conv_node(g: &mut Graph, id: &str, input: &str, output: &str, cout: usize, cin: usize, k: usize, seed: u64) -> Node {
    let f = format!("{id}/filter");
    let b = format!("{id}/bias");
    let fan_in = k * k * cin;
    g.weights
        .insert(f.clone(), WeightTensor::init_uniform(&f, vec![cout, k, k, cin], fan_in, seed));
    g.weights
        .insert(b.clone(), WeightTensor::init_uniform(&b, vec![cout], fan_in, seed));
    Node::new(id, OpKind::Conv2d, vec![input.to_string()], output)
        .with_attr("kernel_h", k)
        .with_attr("kernel_w", k)
        .with_attr("stride", 1usize)
        .with_attr("padding", Padding::Same)
        .with_weights(f, Some(b))
}

/// Turn every `from` activation into `to`. New PRELU slopes start at 0.25;
/// slopes dropped by PRELU -> RELU are not recoverable.
pub fn swap_activation(graph: &Graph, from: Activation, to: Activation) -> Result<Graph, RewriteError> {
    check_valid(graph)?;
    if from == to || graph.count_kind(from.op()) == 0 {
        return Ok(graph.clone());
    }
    let mut g = if graph.is_resolved() { graph.clone() } else { graph.resolved()? };
    let mut slopes = Vec::new();
    for node in g.nodes.iter_mut().filter(|n| n.kind == from.op()) {
        node.kind = to.op();
        match to {
            Activation::Prelu => {
                let c = g.tensors[&node.inputs[0]].shape[3];
                let name = format!("{}/slope", node.id);
                slopes.push((name.clone(), Some(WeightTensor::filled(vec![c], 0.25))));
                node.weights = Some(crate::graph::WeightRef { filter: name, bias: None });
            }
            Activation::Relu => {
                if let Some(w) = node.weights.take() {
                    slopes.push((w.filter, None));
                }
            }
        }
    }
    for (name, w) in slopes {
        match w {
            Some(w) => g.weights.insert(name, w),
            None => g.weights.remove(&name),
        };
    }
    Ok(g)
}

fn check_valid(graph: &Graph) -> Result<(), RewriteError> {
    let v = validate(graph);
    if v.is_empty() {
        Ok(())
    } else {
        Err(GraphError::Invalid(v).into())
    }
}

/// Named rewrite passes as exposed on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pass {
    TcToD2s,
    TcToBilinear,
    ReluToPrelu,
    PreluToRelu,
}

impl Pass {
    pub fn apply(self, graph: &Graph) -> Result<Graph, RewriteError> {
        match self {
            Pass::TcToD2s => replace_transpose_conv(graph, Upsample::DepthToSpace),
            Pass::TcToBilinear => replace_transpose_conv(graph, Upsample::ResizeBilinear),
            Pass::ReluToPrelu => swap_activation(graph, Activation::Relu, Activation::Prelu),
            Pass::PreluToRelu => swap_activation(graph, Activation::Prelu, Activation::Relu),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pass::TcToD2s => "tc2d2s",
            Pass::TcToBilinear => "tc2bilinear",
            Pass::ReluToPrelu => "relu2prelu",
            Pass::PreluToRelu => "prelu2relu",
        }
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pass {
    type Err = RewriteError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tc2d2s" => Ok(Pass::TcToD2s),
            "tc2bilinear" => Ok(Pass::TcToBilinear),
            "relu2prelu" => Ok(Pass::ReluToPrelu),
            "prelu2relu" => Ok(Pass::PreluToRelu),
            _ => Err(RewriteError::UnknownPass(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::complexity;
    use crate::devices::{partition, DeviceProfile};
    use crate::graph::{graph_hash, DataType, GraphBuilder, TensorSpec};
    use crate::zoo::{build, ArchSpec, Family};

    fn unet(up: Upsample, act: Activation) -> Graph {
        let mut s = ArchSpec::default_for(Family::Unet)
            .with_upsample(up)
            .with_activation(act)
            .with_input_hw(64, 64);
        s.depth = 3;
        build(&s).unwrap()
    }

    fn macs(g: &Graph) -> u64 {
        complexity(g).unwrap().total_macs
    }

    #[test]
    fn tc_to_d2s_matches_zoo_variant_cost() {
        let tc = unet(Upsample::TransposeConv, Activation::Relu);
        let d2s = replace_transpose_conv(&tc, Upsample::DepthToSpace).unwrap();
        assert_eq!(d2s.count_kind(OpKind::TransposeConv2d), 0);
        assert_eq!(d2s.output_specs().unwrap(), tc.output_specs().unwrap());
        assert!(macs(&d2s) < macs(&tc));
        assert_eq!(macs(&d2s), macs(&unet(Upsample::DepthToSpace, Activation::Relu)));
        assert!(validate(&d2s).is_empty());
    }

    #[test]
    fn tc_to_bilinear_costs_more() {
        let tc = unet(Upsample::TransposeConv, Activation::Relu);
        let bl = replace_transpose_conv(&tc, Upsample::ResizeBilinear).unwrap();
        assert_eq!(bl.count_kind(OpKind::TransposeConv2d), 0);
        assert!(macs(&bl) > macs(&tc));
        assert_eq!(macs(&bl), macs(&unet(Upsample::ResizeBilinear, Activation::Relu)));
        for (name, spec) in &tc.tensors {
            if let Some(after) = bl.tensors.get(name) {
                assert_eq!(after.shape, spec.shape, "{name}");
            }
        }
    }

    #[test]
    fn identity_without_tc() {
        let g = unet(Upsample::DepthToSpace, Activation::Relu);
        let r = replace_transpose_conv(&g, Upsample::ResizeBilinear).unwrap();
        assert_eq!(graph_hash(&r), graph_hash(&g));
        let s = swap_activation(&g, Activation::Prelu, Activation::Relu).unwrap();
        assert_eq!(graph_hash(&s), graph_hash(&g));
    }

    #[test]
    fn idempotent() {
        let tc = unet(Upsample::TransposeConv, Activation::Relu);
        for p in [Pass::TcToD2s, Pass::TcToBilinear, Pass::ReluToPrelu, Pass::PreluToRelu] {
            let once = p.apply(&tc).unwrap();
            let twice = p.apply(&once).unwrap();
            assert_eq!(graph_hash(&once), graph_hash(&twice), "{p}");
        }
    }

    #[test]
    fn removes_mate30_fallback() {
        let p = DeviceProfile::bundled("mate30-like").unwrap();
        let tc = unet(Upsample::TransposeConv, Activation::Relu);
        let before = partition(&tc, &p, DataType::F16).unwrap().fallback_count();
        assert!(before > 0);
        for target in [Upsample::DepthToSpace, Upsample::ResizeBilinear] {
            let r = replace_transpose_conv(&tc, target).unwrap();
            assert!(partition(&r, &p, DataType::F16).unwrap().fallback_count() < before);
        }
    }

    #[test]
    fn stride_errors() {
        let mut b = GraphBuilder::new(0, TensorSpec::new("x", [1, 4, 4, 2], DataType::F32));
        let t = b.transpose_conv("x", 2, 3, 3);
        let g = b.finish(&[&t]);
        assert!(matches!(
            replace_transpose_conv(&g, Upsample::DepthToSpace),
            Err(RewriteError::UnsupportedStride { stride: 3, .. })
        ));
        assert!(matches!(
            replace_transpose_conv(&g, Upsample::TransposeConv),
            Err(RewriteError::InvalidTarget(_))
        ));
    }

    #[test]
    fn activation_round_trip() {
        let relu = unet(Upsample::DepthToSpace, Activation::Relu);
        let n_relu = relu.count_kind(OpKind::Relu);
        let prelu = swap_activation(&relu, Activation::Relu, Activation::Prelu).unwrap();
        assert_eq!(prelu.nodes.len(), relu.nodes.len());
        assert_eq!(prelu.count_kind(OpKind::Prelu), n_relu);
        assert_eq!(prelu.weights.len(), relu.weights.len() + n_relu);
        assert_eq!(macs(&prelu), macs(&relu));
        assert!(validate(&prelu).is_empty());
        assert!(prelu.weights.values().filter(|w| w.seed.is_none()).all(|w| w.data.iter().all(|&v| v == 0.25)));
        let back = swap_activation(&prelu, Activation::Prelu, Activation::Relu).unwrap();
        assert_eq!(graph_hash(&back), graph_hash(&relu));
    }

    #[test]
    fn quantized_graph_is_rejected() {
        let tc = unet(Upsample::TransposeConv, Activation::Relu).with_input_hw(16, 16).unwrap();
        let calib = vec![vec![crate::Tensor::random([1, 16, 16, 3], 0, 0.0, 1.0)]];
        let ranges = crate::quant::calibrate(&tc, &calib).unwrap();
        let q = crate::quant::quantize_graph(&tc, 8, &ranges).unwrap();
        assert!(matches!(Pass::TcToD2s.apply(&q), Err(RewriteError::Quantized)));
        assert!("tc2foo".parse::<Pass>().is_err());
    }
}
