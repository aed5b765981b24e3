use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{AttrValue, Graph, OpKind};

/// One broken graph or node rule. Violations are data, not errors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DuplicateNodeId { node: String },
    MissingAttr { node: String, attr: String },
    UnexpectedAttr { node: String, attr: String },
    InvalidAttr { node: String, attr: String, reason: String },
    WrongArity { node: String, expected: String, found: usize },
    DuplicateProducer { tensor: String, first: String, second: String },
    OverwritesGraphInput { node: String, tensor: String },
    UndefinedInput { node: String, tensor: String },
    UndefinedOutput { tensor: String },
    MissingWeights { node: String },
    UnexpectedWeights { node: String },
    UnknownWeight { node: String, name: String },
    WeightShape { node: String, reason: String },
    Cycle { nodes: Vec<String> },
}

impl Violation {
    /// Offending node id, if the rule is node-scoped.
    pub fn node(&self) -> Option<&str> {
        use Violation::*;
        match self {
            DuplicateNodeId { node }
            | MissingAttr { node, .. }
            | UnexpectedAttr { node, .. }
            | InvalidAttr { node, .. }
            | WrongArity { node, .. }
            | OverwritesGraphInput { node, .. }
            | UndefinedInput { node, .. }
            | MissingWeights { node }
            | UnexpectedWeights { node }
            | UnknownWeight { node, .. }
            | WeightShape { node, .. } => Some(node),
            DuplicateProducer { second, .. } => Some(second),
            UndefinedOutput { .. } | Cycle { .. } => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateNodeId { node } => write!(f, "DuplicateNodeId({node})"),
            MissingAttr { node, attr } => write!(f, "MissingAttr({node}, \"{attr}\")"),
            UnexpectedAttr { node, attr } => write!(f, "UnexpectedAttr({node}, \"{attr}\")"),
            InvalidAttr { node, attr, reason } => {
                write!(f, "InvalidAttr({node}, \"{attr}\"): {reason}")
            }
            WrongArity {
                node,
                expected,
                found,
            } => write!(f, "WrongArity({node}): expected {expected} inputs, found {found}"),
            DuplicateProducer {
                tensor,
                first,
                second,
            } => write!(f, "DuplicateProducer({tensor}): {first} and {second}"),
            OverwritesGraphInput { node, tensor } => {
                write!(f, "OverwritesGraphInput({node}, {tensor})")
            }
            UndefinedInput { node, tensor } => write!(f, "UndefinedInput({node}, {tensor})"),
            UndefinedOutput { tensor } => write!(f, "UndefinedOutput({tensor})"),
            MissingWeights { node } => write!(f, "MissingWeights({node})"),
            UnexpectedWeights { node } => write!(f, "UnexpectedWeights({node})"),
            UnknownWeight { node, name } => write!(f, "UnknownWeight({node}, {name})"),
            WeightShape { node, reason } => write!(f, "WeightShape({node}): {reason}"),
            Cycle { nodes } => write!(f, "Cycle({})", nodes.join(", ")),
        }
    }
}

/// Check every graph and node invariant. Empty result means well-formed.
pub fn validate(graph: &Graph) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut ids = BTreeSet::new();
    for n in &graph.nodes {
        if !ids.insert(n.id.as_str()) {
            out.push(Violation::DuplicateNodeId { node: n.id.clone() });
        }
    }

    let graph_inputs: BTreeSet<&str> = graph.inputs.iter().map(|i| i.name.as_str()).collect();
    let mut producer: BTreeMap<&str, &str> = BTreeMap::new();
    for n in &graph.nodes {
        if graph_inputs.contains(n.output.as_str()) {
            out.push(Violation::OverwritesGraphInput {
                node: n.id.clone(),
                tensor: n.output.clone(),
            });
        }
        if let Some(first) = producer.insert(n.output.as_str(), n.id.as_str()) {
            out.push(Violation::DuplicateProducer {
                tensor: n.output.clone(),
                first: first.to_string(),
                second: n.id.clone(),
            });
            producer.insert(n.output.as_str(), first);
        }
    }

    for n in &graph.nodes {
        check_attrs(n, &mut out);
        check_arity(n, &mut out);
        check_weights(graph, n, &mut out);
        for t in &n.inputs {
            if !graph_inputs.contains(t.as_str()) && !producer.contains_key(t.as_str()) {
                out.push(Violation::UndefinedInput {
                    node: n.id.clone(),
                    tensor: t.clone(),
                });
            }
        }
    }

    for o in &graph.outputs {
        if !graph_inputs.contains(o.as_str()) && !producer.contains_key(o.as_str()) {
            out.push(Violation::UndefinedOutput { tensor: o.clone() });
        }
    }

    if let Err(nodes) = super::shape::kahn(graph) {
        out.push(Violation::Cycle { nodes });
    }

    out
}

fn check_attrs(n: &super::Node, out: &mut Vec<Violation>) {
    let schema = n.kind.attr_schema();
    for &key in schema {
        match n.attrs.get(key) {
            None => out.push(Violation::MissingAttr {
                node: n.id.clone(),
                attr: key.to_string(),
            }),
            Some(v) => {
                if let Some(reason) = attr_problem(n.kind, key, v) {
                    out.push(Violation::InvalidAttr {
                        node: n.id.clone(),
                        attr: key.to_string(),
                        reason,
                    });
                }
            }
        }
    }
    for key in n.attrs.keys() {
        if !schema.contains(&key.as_str()) {
            out.push(Violation::UnexpectedAttr {
                node: n.id.clone(),
                attr: key.clone(),
            });
        }
    }
}

fn attr_problem(kind: OpKind, key: &str, v: &AttrValue) -> Option<String> {
    match (key, v) {
        ("padding", AttrValue::Str(s)) if s == "SAME" || s == "VALID" => None,
        ("padding", _) => Some("expected \"SAME\" or \"VALID\"".into()),
        ("axis", AttrValue::Int(3)) => None,
        ("axis", _) => Some("only channel-axis (3) concatenation is supported".into()),
        ("block_size", AttrValue::Int(b)) if *b >= 2 => None,
        ("block_size", _) => Some("expected integer >= 2".into()),
        (_, AttrValue::Int(i)) if *i >= 1 => None,
        _ => Some(format!("expected positive integer for {kind}")),
    }
}

fn check_arity(n: &super::Node, out: &mut Vec<Violation>) {
    match n.kind.arity() {
        Some(k) if n.inputs.len() != k => out.push(Violation::WrongArity {
            node: n.id.clone(),
            expected: k.to_string(),
            found: n.inputs.len(),
        }),
        None if n.inputs.is_empty() => out.push(Violation::WrongArity {
            node: n.id.clone(),
            expected: ">= 1".into(),
            found: 0,
        }),
        _ => {}
    }
}

fn check_weights(graph: &Graph, n: &super::Node, out: &mut Vec<Violation>) {
    let Some(w) = &n.weights else {
        if n.kind.takes_weights() {
            out.push(Violation::MissingWeights { node: n.id.clone() });
        }
        return;
    };
    if !n.kind.takes_weights() {
        out.push(Violation::UnexpectedWeights { node: n.id.clone() });
        return;
    }
    let bad = |reason: String| Violation::WeightShape {
        node: n.id.clone(),
        reason,
    };
    let Some(filter) = graph.weights.get(&w.filter) else {
        out.push(Violation::UnknownWeight {
            node: n.id.clone(),
            name: w.filter.clone(),
        });
        return;
    };
    if filter.shape.iter().product::<usize>() != filter.data.len() {
        out.push(bad(format!("`{}` data length does not match shape", w.filter)));
    }
    match n.kind {
        OpKind::Conv2d | OpKind::TransposeConv2d => {
            if filter.shape.len() != 4 {
                out.push(bad("filter must be rank 4 [C_out, K_h, K_w, C_in]".into()));
            } else if let Some((kh, kw, _)) = n.window() {
                if filter.shape[1] != kh || filter.shape[2] != kw {
                    out.push(bad(format!(
                        "filter kernel {}x{} does not match attrs {kh}x{kw}",
                        filter.shape[1], filter.shape[2]
                    )));
                }
            }
        }
        OpKind::FullyConnected => {
            if filter.shape.len() != 2 {
                out.push(bad("filter must be rank 2 [out, in]".into()));
            }
        }
        OpKind::Prelu => {
            if filter.shape.len() != 1 {
                out.push(bad("slope must be rank 1 [C]".into()));
            }
            if w.bias.is_some() {
                out.push(bad("PRELU takes no bias".into()));
            }
        }
        _ => {}
    }
    if let Some(b) = &w.bias {
        match graph.weights.get(b) {
            None => out.push(Violation::UnknownWeight {
                node: n.id.clone(),
                name: b.clone(),
            }),
            Some(bias) => {
                if bias.shape.len() != 1 || filter.shape.first() != bias.shape.first() {
                    out.push(bad(format!("bias `{b}` must be [C_out]")));
                }
            }
        }
    }
}
