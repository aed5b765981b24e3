//! Parametric latency model over a partition plan.
//!
//! Node cost on engine `e`: `macs / macs_per_ms(e) + bytes / bytes_per_ms(e)
//! + per_op_overhead_ms`, where bytes are the node's input, output and
//! parameter elements at the plan's data type width. Each switch between
//! consecutive segments adds `transition_ms`.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complexity::macs_of_node;
use crate::devices::{partition, DeviceProfile, Engine, PartitionPlan};
use crate::exec::{self, Parallelism};
use crate::graph::{DataType, Graph, GraphError, Node};
use crate::zoo::{build, ArchSpec, ZooError};

#[derive(Debug, Error)]
pub enum LatencyError {
    #[error("plan does not match graph: {0}")]
    InconsistentPlan(String),
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Zoo(#[from] ZooError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub accel_ms: f64,
    pub cpu_ms: f64,
    pub transition_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyEstimate {
    pub per_node_ms: BTreeMap<String, f64>,
    pub total_ms: f64,
    pub transitions: usize,
    pub breakdown: Breakdown,
}

/// Bytes a node reads and writes: inputs, output and parameters.
pub fn moved_bytes(graph: &Graph, node: &Node, dtype: DataType) -> Result<u64, GraphError> {
    let elem = dtype.byte_size();
    let mut elems = graph.spec(&node.output)?.numel();
    for i in &node.inputs {
        elems += graph.spec(i)?.numel();
    }
    if let Some(w) = &node.weights {
        for name in std::iter::once(&w.filter).chain(w.bias.as_ref()) {
            elems += graph.weights.get(name).map_or(0, |t| t.numel() as u64);
        }
    }
    Ok(elems * elem)
}

pub fn estimate(graph: &Graph, plan: &PartitionPlan, profile: &DeviceProfile) -> Result<LatencyEstimate, LatencyError> {
    if plan.assignment.len() != graph.nodes.len() {
        return Err(LatencyError::InconsistentPlan(format!(
            "{} assignments for {} nodes",
            plan.assignment.len(),
            graph.nodes.len()
        )));
    }
    let c = &profile.cost;
    let mut per_node_ms = BTreeMap::new();
    let mut breakdown = Breakdown::default();
    for node in &graph.nodes {
        let engine = plan
            .assignment
            .get(&node.id)
            .ok_or_else(|| LatencyError::InconsistentPlan(format!("node `{}` is not assigned", node.id)))?;
        let macs = macs_of_node(graph, node)? as f64;
        let bytes = moved_bytes(graph, node, plan.dtype)? as f64;
        let (mac_rate, byte_rate) = match engine {
            Engine::Accel => (c.accel_macs_per_ms, c.accel_bytes_per_ms),
            Engine::Cpu => (c.cpu_macs_per_ms, c.cpu_bytes_per_ms),
        };
        let ms = macs / mac_rate + bytes / byte_rate + c.per_op_overhead_ms;
        match engine {
            Engine::Accel => breakdown.accel_ms += ms,
            Engine::Cpu => breakdown.cpu_ms += ms,
        }
        per_node_ms.insert(node.id.clone(), ms);
    }
    let transitions = plan.transitions();
    breakdown.transition_ms = transitions as f64 * c.transition_ms;
    Ok(LatencyEstimate {
        per_node_ms,
        total_ms: breakdown.accel_ms + breakdown.cpu_ms + breakdown.transition_ms,
        transitions,
        breakdown,
    })
}

/// Partition then estimate.
pub fn estimate_on(graph: &Graph, profile: &DeviceProfile, dtype: DataType) -> Result<(PartitionPlan, LatencyEstimate), LatencyError> {
    let plan = partition(graph, profile, dtype)?;
    let est = estimate(graph, &plan, profile)?;
    Ok((plan, est))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub name: String,
    pub height: usize,
    pub width: usize,
}

impl FromStr for Resolution {
    type Err = LatencyError;

    /// `360p`, `540p`, `720p`, `900p`, `1080p` (16:9) or `WxH`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let named = match s {
            "360p" => Some((360, 640)),
            "540p" => Some((540, 960)),
            "720p" => Some((720, 1280)),
            "900p" => Some((900, 1600)),
            "1080p" => Some((1080, 1920)),
            _ => None,
        };
        let (height, width) = match named {
            Some(hw) => hw,
            None => {
                let (w, h) = s
                    .split_once('x')
                    .ok_or_else(|| LatencyError::InvalidResolution(format!("`{s}` (expected e.g. 720p or 1280x720)")))?;
                let parse = |v: &str| {
                    v.parse::<usize>()
                        .ok()
                        .filter(|&v| v > 0)
                        .ok_or_else(|| LatencyError::InvalidResolution(format!("`{s}`")))
                };
                (parse(h)?, parse(w)?)
            }
        };
        Ok(Resolution {
            name: s.to_string(),
            height,
            width,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub resolution: String,
    pub height: usize,
    pub width: usize,
    pub total_macs: u64,
    pub fallback_count: usize,
    pub deployable: bool,
    pub estimate: LatencyEstimate,
}

/// Build `spec` at every resolution and estimate its latency on `profile`.
pub fn resolution_sweep(
    spec: &ArchSpec,
    profile: &DeviceProfile,
    dtype: DataType,
    resolutions: &[Resolution],
) -> Result<Vec<SweepRow>, LatencyError> {
    resolution_sweep_with(Parallelism::default(), spec, profile, dtype, resolutions)
}

pub fn resolution_sweep_with(
    par: Parallelism,
    spec: &ArchSpec,
    profile: &DeviceProfile,
    dtype: DataType,
    resolutions: &[Resolution],
) -> Result<Vec<SweepRow>, LatencyError> {
    let d = spec.spatial_divisor();
    for r in resolutions {
        if r.height % d != 0 || r.width % d != 0 {
            return Err(LatencyError::InvalidResolution(format!(
                "{} ({}x{}) is not divisible by {d} as {} at depth {} requires",
                r.name, r.width, r.height, spec.family, spec.depth
            )));
        }
    }
    exec::map(par, resolutions, |r| -> Result<SweepRow, LatencyError> {
        let g = build(&spec.clone().with_input_hw(r.height, r.width))?;
        let (plan, est) = estimate_on(&g, profile, dtype)?;
        Ok(SweepRow {
            resolution: r.name.clone(),
            height: r.height,
            width: r.width,
            total_macs: crate::complexity::complexity(&g)?.total_macs,
            fallback_count: plan.fallback_count(),
            deployable: plan.deployable(),
            estimate: est,
        })
    })
    .into_iter()
    .collect()
}

/// Re-infer an existing graph at every resolution and estimate its latency.
pub fn graph_resolution_sweep(
    graph: &Graph,
    profile: &DeviceProfile,
    dtype: DataType,
    resolutions: &[Resolution],
) -> Result<Vec<SweepRow>, LatencyError> {
    exec::map(Parallelism::default(), resolutions, |r| -> Result<SweepRow, LatencyError> {
        let g = graph
            .with_input_hw(r.height, r.width)
            .map_err(|e| LatencyError::InvalidResolution(format!("{}: {e}", r.name)))?;
        let (plan, est) = estimate_on(&g, profile, dtype)?;
        Ok(SweepRow {
            resolution: r.name.clone(),
            height: r.height,
            width: r.width,
            total_macs: crate::complexity::complexity(&g)?.total_macs,
            fallback_count: plan.fallback_count(),
            deployable: plan.deployable(),
            estimate: est,
        })
    })
    .into_iter()
    .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("resolution,width,height,total_macs,total_ms,accel_ms,cpu_ms,transition_ms,fallback_count,deployable\n");
    for r in rows {
        let b = &r.estimate.breakdown;
        writeln!(
            out,
            "{},{},{},{},{:.3},{:.3},{:.3},{:.3},{},{}",
            r.resolution, r.width, r.height, r.total_macs, r.estimate.total_ms, b.accel_ms, b.cpu_ms, b.transition_ms, r.fallback_count, r.deployable
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::CostParams;
    use crate::graph::{GraphBuilder, TensorSpec};
    use crate::zoo::{Family, Upsample};

    fn zero_overhead(accel: f64, cpu: f64) -> CostParams {
        CostParams {
            accel_macs_per_ms: accel,
            cpu_macs_per_ms: cpu,
            accel_bytes_per_ms: f64::INFINITY,
            cpu_bytes_per_ms: f64::INFINITY,
            transition_ms: 0.0,
            per_op_overhead_ms: 0.0,
        }
    }

    /// One conv with exactly 1e9 MACs: 1000x1000 output, 10 -> 10 channels, 3x3...
    /// 1000*1000*10*10*1*1 = 1e8, so use 100 -> 10 channels with a 1x1 kernel.
    fn giga_conv() -> Graph {
        let mut b = GraphBuilder::new(0, TensorSpec::new("x", [1, 1000, 1000, 100], DataType::F32));
        let c = b.conv("x", 10, 1, 1);
        b.finish(&[&c]).resolved().unwrap()
    }

    #[test]
    fn arithmetic_identities() {
        let g = giga_conv();
        assert_eq!(crate::complexity::complexity(&g).unwrap().total_macs, 1_000_000_000);
        let accel = DeviceProfile::fully_supported("a", zero_overhead(1e9, 1e7));
        let (_, e) = estimate_on(&g, &accel, DataType::F32).unwrap();
        assert_eq!(e.total_ms, 1.0);
        let mut cpu = accel.clone();
        cpu.supported.clear();
        let (_, e) = estimate_on(&g, &cpu, DataType::F32).unwrap();
        assert_eq!(e.total_ms, 100.0);
        assert_eq!(e.breakdown.cpu_ms, 100.0);
    }

    #[test]
    fn inconsistent_plan() {
        let g = giga_conv();
        let p = DeviceProfile::fully_supported("a", zero_overhead(1e9, 1e7));
        let mut plan = partition(&g, &p, DataType::F32).unwrap();
        plan.assignment.clear();
        assert!(matches!(estimate(&g, &plan, &p), Err(LatencyError::InconsistentPlan(_))));
    }

    fn unet(up: Upsample) -> Graph {
        let mut s = ArchSpec::default_for(Family::Unet).with_upsample(up).with_input_hw(128, 128);
        s.depth = 3;
        build(&s).unwrap()
    }

    #[test]
    fn d2s_faster_than_tc_on_mate30() {
        let p = DeviceProfile::bundled("mate30-like").unwrap();
        let (_, tc) = estimate_on(&unet(Upsample::TransposeConv), &p, DataType::F16).unwrap();
        let (_, d2s) = estimate_on(&unet(Upsample::DepthToSpace), &p, DataType::F16).unwrap();
        assert!(d2s.total_ms < tc.total_ms);
        assert!(tc.transitions > 0);
        assert_eq!(d2s.transitions, 0);
    }

    #[test]
    fn breakdown_sums() {
        let p = DeviceProfile::bundled("pixel4-like").unwrap();
        let (plan, e) = estimate_on(&unet(Upsample::TransposeConv), &p, DataType::F16).unwrap();
        let b = e.breakdown;
        assert!((e.total_ms - (b.accel_ms + b.cpu_ms + b.transition_ms)).abs() < 1e-9);
        assert_eq!(e.transitions, plan.segments.len() - 1);
        assert!(e.per_node_ms.values().all(|&v| v >= 0.0));
        let s: f64 = e.per_node_ms.values().sum();
        assert!((s - b.accel_ms - b.cpu_ms).abs() < 1e-6);
    }

    #[test]
    fn fully_supported_is_never_slower() {
        for name in DeviceProfile::bundled_names() {
            let p = DeviceProfile::bundled(name).unwrap();
            let full = DeviceProfile::fully_supported("full", p.cost);
            for up in Upsample::ALL {
                let g = unet(up);
                let (_, a) = estimate_on(&g, &full, DataType::F16).unwrap();
                let (_, b) = estimate_on(&g, &p, DataType::F16).unwrap();
                assert!(a.total_ms <= b.total_ms, "{name} {up:?}");
            }
        }
    }

    #[test]
    fn linear_in_engine_macs() {
        let g = unet(Upsample::DepthToSpace);
        let p1 = DeviceProfile::fully_supported("a", zero_overhead(1e6, 1e3));
        let p2 = DeviceProfile::fully_supported("a", zero_overhead(2e6, 1e3));
        let (_, a) = estimate_on(&g, &p1, DataType::F32).unwrap();
        let (_, b) = estimate_on(&g, &p2, DataType::F32).unwrap();
        let macs = crate::complexity::complexity(&g).unwrap().total_macs as f64;
        assert!((a.total_ms - macs / 1e6).abs() < 1e-6 * a.total_ms);
        assert!((a.total_ms - 2.0 * b.total_ms).abs() < 1e-9 * a.total_ms);
    }

    #[test]
    fn sweep_scaling_and_errors() {
        let mut spec = ArchSpec::default_for(Family::Unet).with_upsample(Upsample::DepthToSpace);
        spec.depth = 3;
        spec.base_channels = 8;
        let p = DeviceProfile::fully_supported("a", zero_overhead(1e6, 1e3));
        let res: Vec<Resolution> = ["64x64", "128x128"].iter().map(|s| s.parse().unwrap()).collect();
        let rows = resolution_sweep(&spec, &p, DataType::F32, &res).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].total_macs, 4 * rows[0].total_macs);
        assert!((rows[1].estimate.total_ms - 4.0 * rows[0].estimate.total_ms).abs() < 1e-9);
        let single = resolution_sweep(&spec, &p, DataType::F32, &res[..1]).unwrap();
        assert_eq!(single.len(), 1);
        let bad: Resolution = "62x64".parse().unwrap();
        assert!(matches!(
            resolution_sweep(&spec, &p, DataType::F32, &[bad]),
            Err(LatencyError::InvalidResolution(_))
        ));
        assert!("fullhd".parse::<Resolution>().is_err());
        let r: Resolution = "900p".parse().unwrap();
        assert_eq!((r.width, r.height), (1600, 900));
        let g = build(&spec.clone().with_input_hw(64, 64)).unwrap();
        let from_graph = graph_resolution_sweep(&g, &p, DataType::F32, &res).unwrap();
        assert_eq!(from_graph, rows);
        assert!(graph_resolution_sweep(&g, &p, DataType::F32, &["62x64".parse().unwrap()]).is_err());
        let csv = sweep_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn sweep_is_increasing_on_bundled_profile() {
        let mut spec = ArchSpec::default_for(Family::Unet).with_upsample(Upsample::ResizeBilinear);
        spec.depth = 3;
        let p = DeviceProfile::bundled("mate30-like").unwrap();
        let res: Vec<Resolution> = ["360p", "540p", "720p", "900p"].iter().map(|s| s.parse().unwrap()).collect();
        let rows = resolution_sweep(&spec, &p, DataType::F16, &res).unwrap();
        for w in rows.windows(2) {
            assert!(w[0].estimate.total_ms < w[1].estimate.total_ms);
        }
    }
}
