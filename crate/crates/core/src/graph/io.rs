//! JSON graph files.
//!
//! Objects are emitted with sorted keys (serde_json's default map is ordered),
//! weights are base64 little-endian f32, and attrs carry only integers and
//! padding strings. The compact form of that document is the canonical byte
//! encoding hashed by [`graph_hash`].

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Graph, GraphError, Node, TensorSpec, WeightTensor};
use crate::quant::QuantInfo;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    version: u32,
    seed: u64,
    inputs: Vec<TensorSpec>,
    outputs: Vec<String>,
    nodes: Vec<Node>,
    weights: BTreeMap<String, WeightFile>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    tensors: BTreeMap<String, TensorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quant: Option<QuantInfo>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    shape: Vec<usize>,
    data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

pub(crate) fn encode_f32(values: &[f32]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

pub(crate) fn decode_f32(text: &str) -> Result<Vec<f32>, String> {
    let bytes = B64.decode(text).map_err(|e| e.to_string())?;
    if bytes.len() % 4 != 0 {
        return Err(format!("payload of {} bytes is not a whole number of f32", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

pub(crate) fn encode_i64(values: &[i64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

pub(crate) fn decode_i64(text: &str) -> Result<Vec<i64>, String> {
    let bytes = B64.decode(text).map_err(|e| e.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err(format!("payload of {} bytes is not a whole number of i64", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|b| i64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect())
}

fn to_file(graph: &Graph) -> GraphFile {
    GraphFile {
        version: FORMAT_VERSION,
        seed: graph.seed,
        inputs: graph.inputs.clone(),
        outputs: graph.outputs.clone(),
        nodes: graph.nodes.clone(),
        weights: graph
            .weights
            .iter()
            .map(|(k, w)| {
                (
                    k.clone(),
                    WeightFile {
                        shape: w.shape.clone(),
                        data: encode_f32(&w.data),
                        seed: w.seed,
                    },
                )
            })
            .collect(),
        tensors: graph.tensors.clone(),
        quant: graph.quant.clone(),
    }
}

fn semantic(field: String, message: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line: 0,
        column: 0,
        message: format!("{field}: {}", message.into()),
    }
}

fn from_file(file: GraphFile) -> Result<Graph, GraphError> {
    if file.version != FORMAT_VERSION {
        return Err(semantic(
            "version".into(),
            format!("unsupported version {} (expected {FORMAT_VERSION})", file.version),
        ));
    }
    let mut weights = BTreeMap::new();
    for (name, w) in file.weights {
        let data = decode_f32(&w.data).map_err(|e| semantic(format!("weights.{name}.data"), e))?;
        let expected: usize = w.shape.iter().product();
        if data.len() != expected {
            return Err(semantic(
                format!("weights.{name}.data"),
                format!("{} values for shape {:?}", data.len(), w.shape),
            ));
        }
        weights.insert(
            name,
            WeightTensor {
                shape: w.shape,
                data,
                seed: w.seed,
            },
        );
    }
    Ok(Graph {
        seed: file.seed,
        inputs: file.inputs,
        outputs: file.outputs,
        nodes: file.nodes,
        weights,
        tensors: file.tensors,
        quant: file.quant,
    })
}

fn document(graph: &Graph) -> serde_json::Value {
    serde_json::to_value(to_file(graph)).expect("graph file is always representable as JSON")
}

/// Compact, key-sorted JSON used for hashing and equality across round-trips.
pub fn canonical_bytes(graph: &Graph) -> Vec<u8> {
    serde_json::to_vec(&document(graph)).expect("serializing a JSON value cannot fail")
}

/// SHA-256 of the canonical encoding, hex.
pub fn graph_hash(graph: &Graph) -> String {
    let digest = Sha256::digest(canonical_bytes(graph));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Pretty-printed file text (sorted keys).
pub fn to_json(graph: &Graph) -> String {
    let mut s = serde_json::to_string_pretty(&document(graph)).expect("serializing a JSON value cannot fail");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<Graph, GraphError> {
    let file: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_file(file)
}

pub fn save(graph: &Graph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let violations = super::validate(graph);
    if !violations.is_empty() {
        return Err(GraphError::Invalid(violations));
    }
    std::fs::write(path, to_json(graph))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Graph, GraphError> {
    from_json(&std::fs::read_to_string(path)?)
}
