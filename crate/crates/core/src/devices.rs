//! Device capability profiles and accelerator/CPU partitioning.
//!
//! A profile lists, per data type, which operator kinds the accelerator
//! runtime accepts. Partitioning marks every other node as CPU fallback,
//! then applies taint rules (a fallen-back trigger node drags selected
//! immediate successors with it) until nothing changes. `fails` rules mark
//! graphs the runtime refuses to compile at all.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{topo_order, DataType, Graph, GraphError, Node, OpKind};

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("cannot read profile {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("profile parse error: {0}")]
    Parse(String),
    #[error("invalid cost parameters: {0}")]
    InvalidCost(String),
    #[error("unknown bundled profile `{0}` (mate30-like|reno3-like|pixel4-like)")]
    UnknownBundled(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaintScope {
    ImmediateSuccessors,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaintRule {
    pub trigger: OpKind,
    #[serde(default = "immediate")]
    pub scope: TaintScope,
    pub affected: BTreeSet<OpKind>,
    /// Data types the rule applies to; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtypes: Option<BTreeSet<DataType>>,
}

fn immediate() -> TaintScope {
    TaintScope::ImmediateSuccessors
}

/// Hard deployment failure. A node matches when every present field matches;
/// a rule with only `dtypes` rejects the whole data type.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<OpKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtypes: Option<BTreeSet<DataType>>,
    /// Matches when max(kernel_h, kernel_w) is at least this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_inputs: Option<usize>,
}

impl FailRule {
    fn applies_to(&self, dtype: DataType) -> bool {
        self.dtypes.as_ref().is_none_or(|d| d.contains(&dtype))
    }

    fn matches(&self, node: &Node) -> bool {
        if self.kind.is_some_and(|k| k != node.kind) {
            return false;
        }
        if let Some(min) = self.min_kernel {
            match node.window() {
                Some((kh, kw, _)) if kh.max(kw) >= min => {}
                _ => return false,
            }
        }
        if let Some(min) = self.min_inputs {
            if node.inputs.len() < min {
                return false;
            }
        }
        true
    }
}

impl fmt::Display for FailRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(k) = self.kind {
            parts.push(k.name().to_string());
        }
        if let Some(k) = self.min_kernel {
            parts.push(format!("kernel>={k}"));
        }
        if let Some(n) = self.min_inputs {
            parts.push(format!("inputs>={n}"));
        }
        if let Some(d) = &self.dtypes {
            parts.push(format!("dtype in [{}]", d.iter().map(|t| t.name()).collect::<Vec<_>>().join(",")));
        }
        if parts.is_empty() {
            parts.push("any".into());
        }
        f.write_str(&parts.join(" "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    pub accel_macs_per_ms: f64,
    pub cpu_macs_per_ms: f64,
    pub accel_bytes_per_ms: f64,
    pub cpu_bytes_per_ms: f64,
    pub transition_ms: f64,
    pub per_op_overhead_ms: f64,
}

impl CostParams {
    pub fn check(&self) -> Result<(), DeviceError> {
        let bad = |m: &str| Err(DeviceError::InvalidCost(m.to_string()));
        let all = [
            self.accel_macs_per_ms,
            self.cpu_macs_per_ms,
            self.accel_bytes_per_ms,
            self.cpu_bytes_per_ms,
            self.transition_ms,
            self.per_op_overhead_ms,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("all cost values must be finite");
        }
        if !(self.cpu_macs_per_ms > 0.0) {
            return bad("cpu_macs_per_ms must be positive");
        }
        if !(self.accel_macs_per_ms > self.cpu_macs_per_ms) {
            return bad("accel_macs_per_ms must exceed cpu_macs_per_ms");
        }
        if !(self.accel_bytes_per_ms > 0.0 && self.cpu_bytes_per_ms > 0.0) {
            return bad("byte throughputs must be positive");
        }
        if self.transition_ms < 0.0 || self.per_op_overhead_ms < 0.0 {
            return bad("transition_ms and per_op_overhead_ms must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub name: String,
    #[serde(default)]
    pub supported: BTreeMap<DataType, BTreeSet<OpKind>>,
    #[serde(default, rename = "taint", skip_serializing_if = "Vec::is_empty")]
    pub taint_rules: Vec<TaintRule>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fails: Vec<FailRule>,
    pub cost: CostParams,
}

const BUNDLED: [(&str, &str); 3] = [
    ("mate30-like", include_str!("../profiles/mate30-like.toml")),
    ("reno3-like", include_str!("../profiles/reno3-like.toml")),
    ("pixel4-like", include_str!("../profiles/pixel4-like.toml")),
];

impl DeviceProfile {
    pub fn from_toml_str(text: &str) -> Result<Self, DeviceError> {
        let p: DeviceProfile = toml::from_str(text).map_err(|e| DeviceError::Parse(e.to_string()))?;
        p.cost.check()?;
        Ok(p)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("profiles serialize")
    }

    pub fn bundled(name: &str) -> Result<Self, DeviceError> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| DeviceError::UnknownBundled(name.to_string()))?;
        Self::from_toml_str(text)
    }

    pub fn bundled_names() -> Vec<&'static str> {
        BUNDLED.iter().map(|(n, _)| *n).collect()
    }

    /// All bundled profiles, in name order.
    pub fn all_bundled() -> Vec<Self> {
        let mut v: Vec<Self> = BUNDLED
            .iter()
            .map(|(_, t)| Self::from_toml_str(t).expect("bundled profiles are valid"))
            .collect();
        v.sort_by(|a, b| a.name.cmp(&b.name));
        v
    }

    /// Every operator supported in every data type, no rules.
    pub fn fully_supported(name: &str, cost: CostParams) -> Self {
        let all: BTreeSet<OpKind> = OpKind::ALL.iter().copied().collect();
        Self {
            name: name.to_string(),
            supported: [DataType::F32, DataType::F16, DataType::Q8, DataType::Q16]
                .into_iter()
                .map(|d| (d, all.clone()))
                .collect(),
            taint_rules: Vec::new(),
            fails: Vec::new(),
            cost,
        }
    }

    pub fn supports(&self, kind: OpKind, dtype: DataType) -> bool {
        self.supported.get(&dtype).is_some_and(|s| s.contains(&kind))
    }
}

/// Load a profile by bundled name or from a TOML file.
pub fn load_profile(path_or_name: &str) -> Result<DeviceProfile, DeviceError> {
    if BUNDLED.iter().any(|(n, _)| *n == path_or_name) {
        return DeviceProfile::bundled(path_or_name);
    }
    let text = std::fs::read_to_string(path_or_name).map_err(|source| DeviceError::Io {
        path: path_or_name.to_string(),
        source,
    })?;
    DeviceProfile::from_toml_str(&text)
}

/// Every `*.toml` profile in a directory, sorted by profile name.
pub fn load_profile_dir(dir: impl AsRef<Path>) -> Result<Vec<DeviceProfile>, DeviceError> {
    let dir = dir.as_ref();
    let io = |source| DeviceError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    let mut out = paths
        .iter()
        .map(|p| load_profile(&p.display().to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Engine {
    Accel,
    Cpu,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE", tag = "reason", content = "node")]
pub enum FallbackReason {
    /// The kind is not supported in any data type.
    UnsupportedKind,
    /// The kind is supported, but not in the requested data type.
    UnsupportedDtype,
    TaintedBy(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub engine: Engine,
    pub nodes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub rule: String,
    pub nodes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub profile: String,
    pub dtype: DataType,
    pub assignment: BTreeMap<String, Engine>,
    /// Maximal same-engine runs in topological order.
    pub segments: Vec<Segment>,
    pub fallback_reasons: BTreeMap<String, FallbackReason>,
    /// Matched `fails` rules; non-empty means the graph cannot be deployed.
    pub failures: Vec<Failure>,
}

impl PartitionPlan {
    pub fn fallback_nodes(&self) -> BTreeSet<&str> {
        self.fallback_reasons.keys().map(|s| s.as_str()).collect()
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback_reasons.len()
    }

    pub fn deployable(&self) -> bool {
        self.failures.is_empty()
    }

    /// Number of engine switches between consecutive segments.
    pub fn transitions(&self) -> usize {
        self.segments.len().saturating_sub(1)
    }
}

pub fn partition(graph: &Graph, profile: &DeviceProfile, dtype: DataType) -> Result<PartitionPlan, GraphError> {
    let order = topo_order(graph)?;
    let mut reasons: BTreeMap<String, FallbackReason> = BTreeMap::new();
    for &i in &order {
        let n = &graph.nodes[i];
        if !profile.supports(n.kind, dtype) {
            let anywhere = profile.supported.values().any(|s| s.contains(&n.kind));
            let reason = if anywhere {
                FallbackReason::UnsupportedDtype
            } else {
                FallbackReason::UnsupportedKind
            };
            reasons.insert(n.id.clone(), reason);
        }
    }

    let producers = graph.producers();
    let rules: Vec<&TaintRule> = profile
        .taint_rules
        .iter()
        .filter(|r| r.dtypes.as_ref().is_none_or(|d| d.contains(&dtype)))
        .collect();
    loop {
        let mut changed = false;
        for &i in &order {
            let n = &graph.nodes[i];
            if reasons.contains_key(&n.id) {
                continue;
            }
            let taint = n.inputs.iter().filter_map(|t| producers.get(t.as_str())).find_map(|&p| {
                let pred = &graph.nodes[p];
                let fired = reasons.contains_key(&pred.id)
                    && rules
                        .iter()
                        .any(|r| r.trigger == pred.kind && r.affected.contains(&n.kind));
                fired.then(|| pred.id.clone())
            });
            if let Some(by) = taint {
                reasons.insert(n.id.clone(), FallbackReason::TaintedBy(by));
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut assignment = BTreeMap::new();
    let mut segments: Vec<Segment> = Vec::new();
    for &i in &order {
        let id = &graph.nodes[i].id;
        let engine = if reasons.contains_key(id) { Engine::Cpu } else { Engine::Accel };
        assignment.insert(id.clone(), engine);
        match segments.last_mut() {
            Some(s) if s.engine == engine => s.nodes.push(id.clone()),
            _ => segments.push(Segment {
                engine,
                nodes: vec![id.clone()],
            }),
        }
    }

    let failures = profile
        .fails
        .iter()
        .filter(|r| r.applies_to(dtype))
        .filter_map(|r| {
            let nodes: Vec<String> = order
                .iter()
                .map(|&i| &graph.nodes[i])
                .filter(|n| r.matches(n))
                .map(|n| n.id.clone())
                .collect();
            (!nodes.is_empty()).then(|| Failure {
                rule: r.to_string(),
                nodes,
            })
        })
        .collect();

    Ok(PartitionPlan {
        profile: profile.name.clone(),
        dtype,
        assignment,
        segments,
        fallback_reasons: reasons,
        failures,
    })
}
