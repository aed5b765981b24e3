//! MAC and memory accounting.
//!
//! Conventions: MACs are counted for CONV_2D, TRANSPOSE_CONV_2D and
//! FULLY_CONNECTED only, bias additions excluded. Elementwise, resize and
//! pooling ops report an `aux_ops` tally instead.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::graph::{topo_order, Graph, GraphError, Node, OpKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCost {
    pub macs: u64,
    pub aux_ops: u64,
    pub weight_bytes: u64,
    /// Size of the node's output tensor.
    pub activation_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub per_node: BTreeMap<String, NodeCost>,
    pub total_macs: u64,
    pub total_aux_ops: u64,
    pub peak_activation_bytes: u64,
    pub total_weight_bytes: u64,
}

fn numel(shape: &[usize; 4]) -> u64 {
    shape.iter().map(|&d| d as u64).product()
}

pub fn macs_of_node(graph: &Graph, node: &Node) -> Result<u64, GraphError> {
    let out = graph.spec(&node.output)?.shape;
    Ok(match node.kind {
        OpKind::Conv2d => {
            let [n, ho, wo, cout] = out;
            let cin = graph.spec(&node.inputs[0])?.shape[3];
            let (kh, kw, _) = node.window().unwrap_or((1, 1, 1));
            (n * ho * wo * cout * kh * kw * cin) as u64
        }
        OpKind::TransposeConv2d => {
            let [n, h, w, cin] = graph.spec(&node.inputs[0])?.shape;
            let (kh, kw, _) = node.window().unwrap_or((1, 1, 1));
            (n * h * w * cin * kh * kw * out[3]) as u64
        }
        OpKind::FullyConnected => {
            let input = graph.spec(&node.inputs[0])?.shape;
            numel(&input) * out[3] as u64
        }
        _ => 0,
    })
}

/// Non-MAC arithmetic: one op per output element for PRELU/ADD/MUL and
/// nearest resize, four taps per output for bilinear, one per window tap for
/// pooling. Pure data movement (D2S, S2D, CONCATENATION) and RELU count zero.
pub fn aux_ops_of_node(graph: &Graph, node: &Node) -> Result<u64, GraphError> {
    let out = numel(&graph.spec(&node.output)?.shape);
    Ok(match node.kind {
        OpKind::Prelu | OpKind::Add | OpKind::Mul | OpKind::ResizeNearest => out,
        OpKind::ResizeBilinear => 4 * out,
        OpKind::MaxPool2d | OpKind::AvgPool2d => {
            let (kh, kw, _) = node.window().unwrap_or((1, 1, 1));
            out * (kh * kw) as u64
        }
        _ => 0,
    })
}

/// Stored size of a node's parameters. Quantized graphs store filters and
/// slopes at their bit width and biases as int32.
pub fn weight_bytes_of_node(graph: &Graph, node: &Node) -> u64 {
    let Some(w) = &node.weights else { return 0 };
    let elem = match &graph.quant {
        Some(q) => q.bits as u64 / 8,
        None => 4,
    };
    let filter = graph.weights.get(&w.filter).map_or(0, |t| t.numel() as u64) * elem;
    let bias = w
        .bias
        .as_ref()
        .and_then(|b| graph.weights.get(b))
        .map_or(0, |t| t.numel() as u64 * 4);
    filter + bias
}

pub fn complexity(graph: &Graph) -> Result<ComplexityReport, GraphError> {
    let order = topo_order(graph)?;
    let mut per_node = BTreeMap::new();
    let (mut total_macs, mut total_aux, mut total_w) = (0u64, 0u64, 0u64);
    for &i in &order {
        let node = &graph.nodes[i];
        let cost = NodeCost {
            macs: macs_of_node(graph, node)?,
            aux_ops: aux_ops_of_node(graph, node)?,
            weight_bytes: weight_bytes_of_node(graph, node),
            activation_bytes: graph.spec(&node.output)?.bytes(),
        };
        total_macs += cost.macs;
        total_aux += cost.aux_ops;
        total_w += cost.weight_bytes;
        per_node.insert(node.id.clone(), cost);
    }
    Ok(ComplexityReport {
        per_node,
        total_macs,
        total_aux_ops: total_aux,
        peak_activation_bytes: peak_activation_bytes(graph, &order)?,
        total_weight_bytes: total_w,
    })
}

/// Liveness over `order`: a tensor is live from its production (or graph
/// start, for inputs) through its last consumer; graph outputs stay live.
fn peak_activation_bytes(graph: &Graph, order: &[usize]) -> Result<u64, GraphError> {
    let mut last_use: BTreeMap<&str, usize> = BTreeMap::new();
    for (step, &i) in order.iter().enumerate() {
        for t in &graph.nodes[i].inputs {
            last_use.insert(t.as_str(), step);
        }
    }
    for o in &graph.outputs {
        last_use.insert(o.as_str(), usize::MAX);
    }
    let mut live = 0u64;
    for input in &graph.inputs {
        live += graph.spec(&input.name)?.bytes();
    }
    let mut peak = live;
    for (step, &i) in order.iter().enumerate() {
        let node = &graph.nodes[i];
        live += graph.spec(&node.output)?.bytes();
        peak = peak.max(live);
        // A tensor fed to both operands (x + x) is released once.
        let distinct: std::collections::BTreeSet<&str> = node.inputs.iter().map(String::as_str).collect();
        for t in distinct {
            if last_use.get(t) == Some(&step) {
                live -= graph.spec(t)?.bytes();
            }
        }
        if !last_use.contains_key(node.output.as_str()) {
            live -= graph.spec(&node.output)?.bytes();
        }
    }
    Ok(peak)
}

/// Per-layer aligned text table followed by totals.
pub fn table(graph: &Graph, report: &ComplexityReport) -> String {
    let rows: Vec<[String; 6]> = graph
        .nodes
        .iter()
        .filter_map(|n| {
            let c = report.per_node.get(&n.id)?;
            let shape = graph.tensors.get(&n.output).map(|s| format!("{:?}", s.shape)).unwrap_or_default();
            Some([
                n.id.clone(),
                n.kind.name().to_string(),
                shape,
                c.macs.to_string(),
                c.aux_ops.to_string(),
                c.weight_bytes.to_string(),
            ])
        })
        .collect();
    let header = ["node", "kind", "output", "macs", "aux_ops", "weight_bytes"].map(String::from);
    let mut widths = header.clone().map(|h| h.len());
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for r in std::iter::once(&header).chain(&rows) {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                if i >= 3 {
                    format!("{cell:>w$}", w = widths[i])
                } else {
                    format!("{cell:<w$}", w = widths[i])
                }
            })
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
    }
    writeln!(out, "total_macs: {} ({:.3} G)", report.total_macs, report.total_macs as f64 / 1e9).unwrap();
    writeln!(out, "total_aux_ops: {}", report.total_aux_ops).unwrap();
    writeln!(out, "total_weight_bytes: {}", report.total_weight_bytes).unwrap();
    writeln!(out, "peak_activation_bytes: {}", report.peak_activation_bytes).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{DataType, GraphBuilder, TensorSpec};
    use crate::interp;
    use crate::tensor::Tensor;

    fn input(h: usize, w: usize, c: usize) -> TensorSpec {
        TensorSpec::new("x", [1, h, w, c], DataType::F32)
    }

    #[test]
    fn conv_and_transpose_examples() {
        let mut b = GraphBuilder::new(0, input(8, 8, 4));
        let c = b.conv("x", 8, 3, 1);
        let g = b.finish(&[&c]).resolved().unwrap();
        assert_eq!(complexity(&g).unwrap().total_macs, 18_432);

        let mut b = GraphBuilder::new(0, input(4, 4, 8));
        let t = b.transpose_conv("x", 4, 2, 2);
        let g = b.finish(&[&t]).resolved().unwrap();
        assert_eq!(complexity(&g).unwrap().total_macs, 2_048);
    }

    #[test]
    fn zero_mac_ops() {
        let mut b = GraphBuilder::new(0, input(4, 4, 8));
        let d = b.depth_to_space("x", 2);
        let r = b.relu(&d);
        let g = b.finish(&[&r]).resolved().unwrap();
        let rep = complexity(&g).unwrap();
        assert_eq!(rep.total_macs, 0);
        assert_eq!(rep.total_aux_ops, 0);

        let mut b = GraphBuilder::new(0, input(4, 4, 2));
        let p = b.prelu("x");
        let u = b.resize_bilinear(&p, 2);
        let g = b.finish(&[&u]).resolved().unwrap();
        let rep = complexity(&g).unwrap();
        assert_eq!(rep.total_macs, 0);
        assert_eq!(rep.total_aux_ops, 32 + 4 * 128);
    }

    #[test]
    fn empty_graph() {
        let mut g = Graph::new(0);
        g.inputs.push(input(4, 4, 3));
        g.outputs.push("x".into());
        let g = g.resolved().unwrap();
        let rep = complexity(&g).unwrap();
        assert_eq!(rep.total_macs, 0);
        assert_eq!(rep.peak_activation_bytes, 4 * 4 * 3 * 4);
    }

    #[test]
    fn unresolved_is_an_error() {
        let mut b = GraphBuilder::new(0, input(4, 4, 3));
        let c = b.conv("x", 4, 3, 1);
        let g = b.finish(&[&c]);
        assert!(matches!(complexity(&g), Err(GraphError::UnresolvedShape(_))));
    }

    #[test]
    fn matches_multiply_counter() {
        let mut b = GraphBuilder::new(3, input(9, 7, 3));
        let c = b.conv("x", 6, 3, 2);
        let t = b.transpose_conv(&c, 5, 4, 2);
        let v = b.conv_valid(&t, 4, 3, 1);
        let f = b.fully_connected(&v, 8 * 6 * 4, 10);
        let g = b.finish(&[&f]).resolved().unwrap();
        let x = Tensor::random([1, 9, 7, 3], 1, 0.0, 1.0);
        assert_eq!(complexity(&g).unwrap().total_macs, interp::count_multiplies(&g, &[x]).unwrap());
    }

    #[test]
    fn peak_bounds_and_skip_liveness() {
        let mut b = GraphBuilder::new(0, input(8, 8, 4));
        let a = b.conv("x", 4, 3, 1);
        let c = b.conv(&a, 4, 3, 1);
        let d = b.conv(&c, 4, 3, 1);
        let s = b.add(&a, &d);
        let g = b.finish(&[&s]).resolved().unwrap();
        let rep = complexity(&g).unwrap();
        let t = 8 * 8 * 4 * 4u64;
        // `a` stays live across c and d: a + c + d at the peak.
        assert_eq!(rep.peak_activation_bytes, 3 * t);
        let all: u64 = g.tensors.values().map(|s| s.bytes()).sum();
        assert!(rep.peak_activation_bytes <= all);
    }

    #[test]
    fn invariant_under_reordering_and_serialization() {
        let mut b = GraphBuilder::new(0, input(8, 8, 3));
        let a = b.conv("x", 4, 3, 1);
        let p = b.conv(&a, 4, 1, 1);
        let q = b.conv(&a, 4, 3, 1);
        let s = b.concat(&[&p, &q]);
        let g = b.finish(&[&s]).resolved().unwrap();
        let base = complexity(&g).unwrap();
        let mut r = g.clone();
        r.nodes.swap(1, 2);
        assert_eq!(complexity(&r).unwrap(), base);
        let back = crate::graph::from_json(&crate::graph::to_json(&g)).unwrap().resolved().unwrap();
        assert_eq!(complexity(&back).unwrap().total_macs, base.total_macs);
    }

    #[test]
    fn table_lists_every_node() {
        let mut b = GraphBuilder::new(0, input(8, 8, 3));
        let a = b.conv("x", 4, 3, 1);
        let r = b.relu(&a);
        let g = b.finish(&[&r]).resolved().unwrap();
        let text = table(&g, &complexity(&g).unwrap());
        assert!(text.contains("CONV_2D") && text.contains("RELU"));
        assert!(text.contains("total_macs: 6912"));
    }

    #[test]
    fn self_add_releases_input_once() {
        let mut b = GraphBuilder::new(0, TensorSpec::new("x", [1, 4, 4, 2], DataType::F32));
        let r = b.relu("x");
        let a = b.add(&r, &r);
        let o = b.relu(&a);
        let g = b.finish(&[&o]).resolved().unwrap();
        let t = 4 * 4 * 2 * 4;
        assert_eq!(complexity(&g).unwrap().peak_activation_bytes, 2 * t);
    }
}
