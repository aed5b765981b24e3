//! Operator graph IR: NHWC tensors, a fixed operator vocabulary, and a weight store.
//!
//! Graphs are values. Every pass takes `&Graph` and returns a new `Graph`.

mod builder;
mod io;
mod shape;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quant::QuantInfo;
use crate::rng::SplitMix64;

pub use builder::GraphBuilder;

pub(crate) mod io_helpers {
    pub(crate) use super::io::{decode_i64, encode_i64};
}
pub use io::{canonical_bytes, from_json, graph_hash, load, save, to_json};
pub use shape::{infer_shapes, topo_order};
pub use validate::{validate, Violation};

/// (N, H, W, C)
pub type Shape = [usize; 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    F32,
    F16,
    /// Asymmetric unsigned 8-bit.
    Q8,
    /// Symmetric signed 16-bit.
    Q16,
}

impl DataType {
    pub const ALL: [DataType; 4] = [DataType::F32, DataType::F16, DataType::Q8, DataType::Q16];

    pub fn byte_size(self) -> u64 {
        match self {
            DataType::F32 => 4,
            DataType::F16 | DataType::Q16 => 2,
            DataType::Q8 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DataType::F32 => "f32",
            DataType::F16 => "f16",
            DataType::Q8 => "q8",
            DataType::Q16 => "q16",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f32" | "float" => Ok(DataType::F32),
            "f16" => Ok(DataType::F16),
            "q8" | "8" => Ok(DataType::Q8),
            "q16" | "16" => Ok(DataType::Q16),
            other => Err(format!("unknown dtype `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Shape,
    pub dtype: DataType,
}

impl TensorSpec {
    pub fn new(name: impl Into<String>, shape: Shape, dtype: DataType) -> Self {
        Self {
            name: name.into(),
            shape,
            dtype,
        }
    }

    pub fn numel(&self) -> u64 {
        self.shape.iter().map(|&d| d as u64).product()
    }

    pub fn bytes(&self) -> u64 {
        self.numel() * self.dtype.byte_size()
    }
}

macro_rules! op_kinds {
    ($($variant:ident => $name:literal),* $(,)?) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum OpKind {
            $(#[serde(rename = $name)] $variant,)*
        }

        impl OpKind {
            pub const ALL: &'static [OpKind] = &[$(OpKind::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(OpKind::$variant => $name,)*
                }
            }
        }

        impl FromStr for OpKind {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(OpKind::$variant),)*
                    other => Err(format!("unknown op kind `{other}`")),
                }
            }
        }
    };
}

op_kinds! {
    Conv2d => "CONV_2D",
    TransposeConv2d => "TRANSPOSE_CONV_2D",
    DepthToSpace => "DEPTH_TO_SPACE",
    SpaceToDepth => "SPACE_TO_DEPTH",
    ResizeBilinear => "RESIZE_BILINEAR",
    ResizeNearest => "RESIZE_NEAREST",
    Concatenation => "CONCATENATION",
    Add => "ADD",
    Mul => "MUL",
    Relu => "RELU",
    Prelu => "PRELU",
    MaxPool2d => "MAX_POOL_2D",
    AvgPool2d => "AVG_POOL_2D",
    FullyConnected => "FULLY_CONNECTED",
}

impl OpKind {
    /// Kinds whose nodes carry a filter (and optional bias) in the weight store.
    pub fn has_filter(self) -> bool {
        matches!(
            self,
            OpKind::Conv2d | OpKind::TransposeConv2d | OpKind::FullyConnected
        )
    }

    /// Kinds that reference a weight tensor at all. PRELU carries its slopes.
    pub fn takes_weights(self) -> bool {
        self.has_filter() || self == OpKind::Prelu
    }

    /// Required attribute names, sorted.
    pub fn attr_schema(self) -> &'static [&'static str] {
        match self {
            OpKind::Conv2d | OpKind::MaxPool2d | OpKind::AvgPool2d => {
                &["kernel_h", "kernel_w", "padding", "stride"]
            }
            OpKind::TransposeConv2d => &["kernel_h", "kernel_w", "stride"],
            OpKind::DepthToSpace | OpKind::SpaceToDepth => &["block_size"],
            OpKind::ResizeBilinear | OpKind::ResizeNearest => &["scale"],
            OpKind::Concatenation => &["axis"],
            OpKind::Add
            | OpKind::Mul
            | OpKind::Relu
            | OpKind::Prelu
            | OpKind::FullyConnected => &[],
        }
    }

    /// Exact input count, or `None` for variadic (CONCATENATION, at least one).
    pub fn arity(self) -> Option<usize> {
        match self {
            OpKind::Concatenation => None,
            OpKind::Add | OpKind::Mul => Some(2),
            _ => Some(1),
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

impl Padding {
    pub fn name(self) -> &'static str {
        match self {
            Padding::Same => "SAME",
            Padding::Valid => "VALID",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Int(i64),
    Str(String),
}

impl From<i64> for AttrValue {
    fn from(v: i64) -> Self {
        AttrValue::Int(v)
    }
}

impl From<usize> for AttrValue {
    fn from(v: usize) -> Self {
        AttrValue::Int(v as i64)
    }
}

impl From<Padding> for AttrValue {
    fn from(p: Padding) -> Self {
        AttrValue::Str(p.name().to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightRef {
    pub filter: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: OpKind,
    #[serde(default)]
    pub attrs: BTreeMap<String, AttrValue>,
    pub inputs: Vec<String>,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightRef>,
}

impl Node {
    pub fn new(id: impl Into<String>, kind: OpKind, inputs: Vec<String>, output: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind,
            attrs: BTreeMap::new(),
            inputs,
            output: output.into(),
            weights: None,
        }
    }

    pub fn with_attr(mut self, key: &str, value: impl Into<AttrValue>) -> Self {
        self.attrs.insert(key.to_string(), value.into());
        self
    }

    pub fn with_weights(mut self, filter: impl Into<String>, bias: Option<String>) -> Self {
        self.weights = Some(WeightRef {
            filter: filter.into(),
            bias,
        });
        self
    }

    pub fn int_attr(&self, key: &str) -> Option<usize> {
        match self.attrs.get(key)? {
            AttrValue::Int(v) if *v >= 0 => Some(*v as usize),
            _ => None,
        }
    }

    pub fn padding(&self) -> Option<Padding> {
        match self.attrs.get("padding")? {
            AttrValue::Str(s) if s == "SAME" => Some(Padding::Same),
            AttrValue::Str(s) if s == "VALID" => Some(Padding::Valid),
            _ => None,
        }
    }

    /// Kernel (h, w) and stride for windowed kinds.
    pub fn window(&self) -> Option<(usize, usize, usize)> {
        Some((
            self.int_attr("kernel_h")?,
            self.int_attr("kernel_w")?,
            self.int_attr("stride")?,
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    pub seed: Option<u64>,
}

impl WeightTensor {
    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], keyed by (seed, name).
    pub fn init_uniform(name: &str, shape: Vec<usize>, fan_in: usize, seed: u64) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
        let mut rng = SplitMix64::keyed(seed, name);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(-bound, bound)).collect();
        Self {
            shape,
            data,
            seed: Some(seed),
        }
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
            seed: None,
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    /// Seed used for any weights the graph (or a pass over it) initializes.
    pub seed: u64,
    pub inputs: Vec<TensorSpec>,
    pub outputs: Vec<String>,
    pub nodes: Vec<Node>,
    pub weights: BTreeMap<String, WeightTensor>,
    /// Resolved specs for every tensor; filled by [`infer_shapes`].
    pub tensors: BTreeMap<String, TensorSpec>,
    pub quant: Option<QuantInfo>,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("shape mismatch at node `{node}`: {reason}")]
    ShapeMismatch { node: String, reason: String },
    #[error("no shape given for graph input `{0}`")]
    MissingInputShape(String),
    #[error("tensor `{0}` has no resolved shape")]
    UnresolvedShape(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Graph {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            nodes: Vec::new(),
            weights: BTreeMap::new(),
            tensors: BTreeMap::new(),
            quant: None,
        }
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn spec(&self, tensor: &str) -> Result<&TensorSpec, GraphError> {
        self.tensors
            .get(tensor)
            .ok_or_else(|| GraphError::UnresolvedShape(tensor.to_string()))
    }

    pub fn is_resolved(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| self.tensors.contains_key(&n.output))
            && self.inputs.iter().all(|i| self.tensors.contains_key(&i.name))
    }

    /// Re-run shape inference using the graph's own input specs.
    pub fn resolved(&self) -> Result<Graph, GraphError> {
        let shapes = self
            .inputs
            .iter()
            .map(|i| (i.name.clone(), i.shape))
            .collect();
        infer_shapes(self, &shapes)
    }

    /// Same graph with every input resized to (H, W); channels and batch kept.
    pub fn with_input_hw(&self, height: usize, width: usize) -> Result<Graph, GraphError> {
        let shapes = self
            .inputs
            .iter()
            .map(|i| (i.name.clone(), [i.shape[0], height, width, i.shape[3]]))
            .collect();
        let mut g = self.clone();
        g.tensors.clear();
        infer_shapes(&g, &shapes)
    }

    /// Map tensor name to the ids of nodes consuming it, in node-list order.
    pub fn consumers(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for n in &self.nodes {
            for i in &n.inputs {
                out.entry(i.as_str()).or_default().push(n.id.as_str());
            }
        }
        out
    }

    /// Map tensor name to its producing node index.
    pub fn producers(&self) -> BTreeMap<&str, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.output.as_str(), i))
            .collect()
    }

    pub fn count_kind(&self, kind: OpKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Output spec list (requires resolved shapes).
    pub fn output_specs(&self) -> Result<Vec<TensorSpec>, GraphError> {
        self.outputs.iter().map(|o| self.spec(o).cloned()).collect()
    }
}
