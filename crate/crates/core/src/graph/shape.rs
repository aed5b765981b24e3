use std::collections::{BTreeMap, BTreeSet};

use super::{validate, Graph, GraphError, Node, OpKind, Padding, Shape, TensorSpec};

/// Kahn's algorithm; ties broken by node id. On a cycle, returns the ids left over.
pub(crate) fn kahn(graph: &Graph) -> Result<Vec<usize>, Vec<String>> {
    let producer: BTreeMap<&str, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.output.as_str(), i))
        .collect();
    let mut indegree = vec![0usize; graph.nodes.len()];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); graph.nodes.len()];
    for (i, n) in graph.nodes.iter().enumerate() {
        for t in &n.inputs {
            if let Some(&p) = producer.get(t.as_str()) {
                indegree[i] += 1;
                succ[p].push(i);
            }
        }
    }
    let mut ready: BTreeSet<(&str, usize)> = graph
        .nodes
        .iter()
        .enumerate()
        .filter(|(i, _)| indegree[*i] == 0)
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let mut order = Vec::with_capacity(graph.nodes.len());
    while let Some(first) = ready.pop_first() {
        let i = first.1;
        order.push(i);
        for &s in &succ[i] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.insert((graph.nodes[s].id.as_str(), s));
            }
        }
    }
    if order.len() == graph.nodes.len() {
        Ok(order)
    } else {
        let done: BTreeSet<usize> = order.into_iter().collect();
        Err(graph
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| !done.contains(i))
            .map(|(_, n)| n.id.clone())
            .collect())
    }
}

/// Deterministic topological order of node indices (ties broken by node id).
pub fn topo_order(graph: &Graph) -> Result<Vec<usize>, GraphError> {
    kahn(graph).map_err(|nodes| GraphError::Invalid(vec![super::Violation::Cycle { nodes }]))
}

/// Resolve every tensor's spec from the given input shapes.
///
/// The returned graph has its nodes in canonical topological order, its input
/// specs updated, and `tensors` filled. Existing dtypes in `tensors` are kept.
pub fn infer_shapes(graph: &Graph, input_shapes: &BTreeMap<String, Shape>) -> Result<Graph, GraphError> {
    let violations = validate(graph);
    if !violations.is_empty() {
        return Err(GraphError::Invalid(violations));
    }
    let order = topo_order(graph)?;
    let mut out = graph.clone();
    out.nodes = order.iter().map(|&i| graph.nodes[i].clone()).collect();
    out.tensors.clear();

    for spec in out.inputs.iter_mut() {
        let shape = *input_shapes
            .get(&spec.name)
            .ok_or_else(|| GraphError::MissingInputShape(spec.name.clone()))?;
        if shape.contains(&0) {
            return Err(GraphError::ShapeMismatch {
                node: spec.name.clone(),
                reason: format!("input shape {shape:?} has a zero dimension"),
            });
        }
        spec.shape = shape;
        if let Some(old) = graph.tensors.get(&spec.name) {
            spec.dtype = old.dtype;
        }
        out.tensors.insert(spec.name.clone(), spec.clone());
    }

    for node in &out.nodes {
        let ins: Vec<&TensorSpec> = node
            .inputs
            .iter()
            .map(|t| out.tensors.get(t).ok_or_else(|| GraphError::UnresolvedShape(t.clone())))
            .collect::<Result<_, _>>()?;
        let shape = node_output_shape(&out, node, &ins)?;
        let dtype = graph
            .tensors
            .get(&node.output)
            .map(|s| s.dtype)
            .unwrap_or(ins[0].dtype);
        out.tensors
            .insert(node.output.clone(), TensorSpec::new(node.output.clone(), shape, dtype));
    }
    Ok(out)
}

fn mismatch(node: &Node, reason: impl Into<String>) -> GraphError {
    GraphError::ShapeMismatch {
        node: node.id.clone(),
        reason: reason.into(),
    }
}

/// SAME: ceil(x / s). VALID: floor((x - k) / s) + 1.
pub(crate) fn windowed_extent(x: usize, k: usize, s: usize, padding: Padding) -> Option<usize> {
    match padding {
        Padding::Same => Some(x.div_ceil(s)),
        Padding::Valid => (x >= k).then(|| (x - k) / s + 1),
    }
}

fn node_output_shape(graph: &Graph, node: &Node, ins: &[&TensorSpec]) -> Result<Shape, GraphError> {
    let [n, h, w, c] = ins[0].shape;
    let filter_shape = || -> &[usize] {
        let name = &node.weights.as_ref().expect("validated").filter;
        &graph.weights[name].shape
    };
    // Attributes are present and positive after validation.
    let int = |k: &str| node.int_attr(k).expect("validated attr");
    match node.kind {
        OpKind::Conv2d => {
            let f = filter_shape();
            if f[3] != c {
                return Err(mismatch(node, format!("filter expects {} input channels, got {c}", f[3])));
            }
            let (kh, kw, s) = node.window().expect("validated");
            let pad = node.padding().expect("validated");
            let ho = windowed_extent(h, kh, s, pad);
            let wo = windowed_extent(w, kw, s, pad);
            match (ho, wo) {
                (Some(ho), Some(wo)) => Ok([n, ho, wo, f[0]]),
                _ => Err(mismatch(node, format!("input {h}x{w} smaller than kernel {kh}x{kw}"))),
            }
        }
        OpKind::TransposeConv2d => {
            let f = filter_shape();
            if f[3] != c {
                return Err(mismatch(node, format!("filter expects {} input channels, got {c}", f[3])));
            }
            let s = int("stride");
            Ok([n, s * h, s * w, f[0]])
        }
        OpKind::DepthToSpace => {
            let b = int("block_size");
            if c % (b * b) != 0 {
                return Err(mismatch(node, format!("channels {c} not divisible by block^2 = {}", b * b)));
            }
            Ok([n, b * h, b * w, c / (b * b)])
        }
        OpKind::SpaceToDepth => {
            let b = int("block_size");
            if h % b != 0 || w % b != 0 {
                return Err(mismatch(node, format!("spatial {h}x{w} not divisible by block {b}")));
            }
            Ok([n, h / b, w / b, c * b * b])
        }
        OpKind::ResizeBilinear | OpKind::ResizeNearest => {
            let f = int("scale");
            Ok([n, f * h, f * w, c])
        }
        OpKind::Concatenation => {
            let mut total = 0;
            for s in ins {
                let [n2, h2, w2, c2] = s.shape;
                if (n2, h2, w2) != (n, h, w) {
                    return Err(mismatch(
                        node,
                        format!("concat inputs disagree on N/H/W: {:?} vs {:?}", ins[0].shape, s.shape),
                    ));
                }
                total += c2;
            }
            Ok([n, h, w, total])
        }
        OpKind::Add | OpKind::Mul => {
            if ins[0].shape != ins[1].shape {
                return Err(mismatch(
                    node,
                    format!("elementwise shapes differ: {:?} vs {:?}", ins[0].shape, ins[1].shape),
                ));
            }
            Ok(ins[0].shape)
        }
        OpKind::Relu => Ok(ins[0].shape),
        OpKind::Prelu => {
            let f = filter_shape();
            if f[0] != c {
                return Err(mismatch(node, format!("slope has {} channels, input has {c}", f[0])));
            }
            Ok(ins[0].shape)
        }
        OpKind::MaxPool2d | OpKind::AvgPool2d => {
            let (kh, kw, s) = node.window().expect("validated");
            let pad = node.padding().expect("validated");
            match (windowed_extent(h, kh, s, pad), windowed_extent(w, kw, s, pad)) {
                (Some(ho), Some(wo)) => Ok([n, ho, wo, c]),
                _ => Err(mismatch(node, format!("input {h}x{w} smaller than window {kh}x{kw}"))),
            }
        }
        OpKind::FullyConnected => {
            let f = filter_shape();
            if f[1] != h * w * c {
                return Err(mismatch(
                    node,
                    format!("filter expects {} inputs, got {}", f[1], h * w * c),
                ));
            }
            Ok([n, 1, 1, f[0]])
        }
    }
}
