use std::collections::BTreeMap;

use super::{Graph, Node, OpKind, Padding, TensorSpec, WeightTensor};

/// Incremental graph construction with automatic ids and seeded weights.
///
/// Node ids are `n<counter>_<scope><op>`, so id order equals construction
/// order and the canonical topological sort keeps the builder's sequence.
/// Each node's output tensor is named after the node.
#[derive(Clone, Debug)]
pub struct GraphBuilder {
    graph: Graph,
    channels: BTreeMap<String, usize>,
    counter: usize,
    scope: String,
}

impl GraphBuilder {
    pub fn new(seed: u64, input: TensorSpec) -> Self {
        let mut channels = BTreeMap::new();
        channels.insert(input.name.clone(), input.shape[3]);
        let mut graph = Graph::new(seed);
        graph.inputs.push(input);
        Self {
            graph,
            channels,
            counter: 0,
            scope: String::new(),
        }
    }

    pub fn set_scope(&mut self, scope: &str) {
        self.scope = if scope.is_empty() {
            String::new()
        } else {
            format!("{scope}_")
        };
    }

    pub fn channels(&self, tensor: &str) -> usize {
        self.channels[tensor]
    }

    pub fn seed(&self) -> u64 {
        self.graph.seed
    }

    fn next_id(&mut self, op: &str) -> String {
        let id = format!("n{:04}_{}{}", self.counter, self.scope, op);
        self.counter += 1;
        id
    }

    fn push(&mut self, node: Node, channels: usize) -> String {
        let out = node.output.clone();
        self.channels.insert(out.clone(), channels);
        self.graph.nodes.push(node);
        out
    }

    fn add_filter(&mut self, id: &str, shape: Vec<usize>, fan_in: usize) -> (String, Option<String>) {
        let seed = self.graph.seed;
        let f = format!("{id}/filter");
        let b = format!("{id}/bias");
        let cout = shape[0];
        self.graph
            .weights
            .insert(f.clone(), WeightTensor::init_uniform(&f, shape, fan_in, seed));
        self.graph
            .weights
            .insert(b.clone(), WeightTensor::init_uniform(&b, vec![cout], fan_in, seed));
        (f, Some(b))
    }

    fn conv_with(&mut self, x: &str, cout: usize, k: usize, stride: usize, padding: Padding) -> String {
        let cin = self.channels(x);
        let id = self.next_id("conv");
        let (f, b) = self.add_filter(&id, vec![cout, k, k, cin], k * k * cin);
        let node = Node::new(&id, OpKind::Conv2d, vec![x.to_string()], &id)
            .with_attr("kernel_h", k)
            .with_attr("kernel_w", k)
            .with_attr("stride", stride)
            .with_attr("padding", padding)
            .with_weights(f, b);
        self.push(node, cout)
    }

    /// k x k convolution, SAME padding.
    pub fn conv(&mut self, x: &str, cout: usize, k: usize, stride: usize) -> String {
        self.conv_with(x, cout, k, stride, Padding::Same)
    }

    pub fn conv_valid(&mut self, x: &str, cout: usize, k: usize, stride: usize) -> String {
        self.conv_with(x, cout, k, stride, Padding::Valid)
    }

    pub fn transpose_conv(&mut self, x: &str, cout: usize, k: usize, stride: usize) -> String {
        let cin = self.channels(x);
        let id = self.next_id("tconv");
        let (f, b) = self.add_filter(&id, vec![cout, k, k, cin], k * k * cin);
        let node = Node::new(&id, OpKind::TransposeConv2d, vec![x.to_string()], &id)
            .with_attr("kernel_h", k)
            .with_attr("kernel_w", k)
            .with_attr("stride", stride)
            .with_weights(f, b);
        self.push(node, cout)
    }

    pub fn fully_connected(&mut self, x: &str, in_features: usize, out_features: usize) -> String {
        let id = self.next_id("fc");
        let (f, b) = self.add_filter(&id, vec![out_features, in_features], in_features);
        let node = Node::new(&id, OpKind::FullyConnected, vec![x.to_string()], &id).with_weights(f, b);
        self.push(node, out_features)
    }

    pub fn depth_to_space(&mut self, x: &str, block: usize) -> String {
        let c = self.channels(x) / (block * block);
        let id = self.next_id("d2s");
        let node = Node::new(&id, OpKind::DepthToSpace, vec![x.to_string()], &id).with_attr("block_size", block);
        self.push(node, c)
    }

    pub fn space_to_depth(&mut self, x: &str, block: usize) -> String {
        let c = self.channels(x) * block * block;
        let id = self.next_id("s2d");
        let node = Node::new(&id, OpKind::SpaceToDepth, vec![x.to_string()], &id).with_attr("block_size", block);
        self.push(node, c)
    }

    fn resize(&mut self, kind: OpKind, x: &str, scale: usize) -> String {
        let c = self.channels(x);
        let id = self.next_id(if kind == OpKind::ResizeBilinear { "bilinear" } else { "nearest" });
        let node = Node::new(&id, kind, vec![x.to_string()], &id).with_attr("scale", scale);
        self.push(node, c)
    }

    pub fn resize_bilinear(&mut self, x: &str, scale: usize) -> String {
        self.resize(OpKind::ResizeBilinear, x, scale)
    }

    pub fn resize_nearest(&mut self, x: &str, scale: usize) -> String {
        self.resize(OpKind::ResizeNearest, x, scale)
    }

    pub fn concat(&mut self, xs: &[&str]) -> String {
        let c = xs.iter().map(|x| self.channels(x)).sum();
        let id = self.next_id("concat");
        let node = Node::new(&id, OpKind::Concatenation, xs.iter().map(|s| s.to_string()).collect(), &id)
            .with_attr("axis", 3usize);
        self.push(node, c)
    }

    fn binary(&mut self, kind: OpKind, a: &str, b: &str) -> String {
        let c = self.channels(a);
        let id = self.next_id(if kind == OpKind::Add { "add" } else { "mul" });
        let node = Node::new(&id, kind, vec![a.to_string(), b.to_string()], &id);
        self.push(node, c)
    }

    pub fn add(&mut self, a: &str, b: &str) -> String {
        self.binary(OpKind::Add, a, b)
    }

    pub fn mul(&mut self, a: &str, b: &str) -> String {
        self.binary(OpKind::Mul, a, b)
    }

    pub fn relu(&mut self, x: &str) -> String {
        let c = self.channels(x);
        let id = self.next_id("relu");
        self.push(Node::new(&id, OpKind::Relu, vec![x.to_string()], &id), c)
    }

    /// PRELU with per-channel slopes initialized to 0.25.
    pub fn prelu(&mut self, x: &str) -> String {
        let c = self.channels(x);
        let id = self.next_id("prelu");
        let slope = format!("{id}/slope");
        self.graph
            .weights
            .insert(slope.clone(), WeightTensor::filled(vec![c], 0.25));
        let node = Node::new(&id, OpKind::Prelu, vec![x.to_string()], &id).with_weights(slope, None);
        self.push(node, c)
    }

    /// RELU or PRELU.
    pub fn activation(&mut self, x: &str, kind: OpKind) -> String {
        match kind {
            OpKind::Prelu => self.prelu(x),
            _ => self.relu(x),
        }
    }

    fn pool(&mut self, kind: OpKind, x: &str, k: usize, stride: usize) -> String {
        let c = self.channels(x);
        let id = self.next_id(if kind == OpKind::MaxPool2d { "maxpool" } else { "avgpool" });
        let node = Node::new(&id, kind, vec![x.to_string()], &id)
            .with_attr("kernel_h", k)
            .with_attr("kernel_w", k)
            .with_attr("stride", stride)
            .with_attr("padding", Padding::Same);
        self.push(node, c)
    }

    pub fn max_pool(&mut self, x: &str, k: usize, stride: usize) -> String {
        self.pool(OpKind::MaxPool2d, x, k, stride)
    }

    pub fn avg_pool(&mut self, x: &str, k: usize, stride: usize) -> String {
        self.pool(OpKind::AvgPool2d, x, k, stride)
    }

    pub fn finish(mut self, outputs: &[&str]) -> Graph {
        self.graph.outputs = outputs.iter().map(|s| s.to_string()).collect();
        self.graph
    }
}
