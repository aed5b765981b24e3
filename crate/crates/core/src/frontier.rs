//! Variant sweep: upsample x activation x prune target x numeric format,
//! each evaluated for MACs, per-device latency and numeric error, plus the
//! quality/latency Pareto frontier.
//!
//! Latency is estimated at the base spec's resolution. Numeric error is
//! measured at a small evaluation resolution against the f32 output of the
//! same (possibly pruned) architecture, so the quality axis is a deviation
//! from float, not a restoration score.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::{partition, DeviceProfile};
use crate::exec::{self, Parallelism};
use crate::graph::{DataType, Graph};
use crate::interp::{self, Precision};
use crate::latency::estimate;
use crate::metrics::Db;
use crate::pruning::{prune, PruneOptions};
use crate::quant::{calibrate, compare_outputs, quantize_graph, ErrorReport};
use crate::tensor::Tensor;
use crate::zoo::{build, Activation, ArchSpec, Family, Upsample};

#[derive(Debug, Error)]
pub enum FrontierError {
    #[error("{count} variants exceed the cap of {cap}")]
    TooManyVariants { count: usize, cap: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Numeric format of a variant. Float variants are deployed as fp16.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantSetting {
    Float,
    Int8,
    Int16,
}

impl QuantSetting {
    pub fn bits(self) -> Option<u8> {
        match self {
            QuantSetting::Float => None,
            QuantSetting::Int8 => Some(8),
            QuantSetting::Int16 => Some(16),
        }
    }

    pub fn dtype(self) -> DataType {
        match self {
            QuantSetting::Float => DataType::F16,
            QuantSetting::Int8 => DataType::Q8,
            QuantSetting::Int16 => DataType::Q16,
        }
    }

    fn name(self) -> &'static str {
        match self {
            QuantSetting::Float => "float",
            QuantSetting::Int8 => "int8",
            QuantSetting::Int16 => "int16",
        }
    }
}

impl fmt::Display for QuantSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuantSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "float" | "f16" | "fp16" => Ok(QuantSetting::Float),
            "8" | "int8" | "q8" => Ok(QuantSetting::Int8),
            "16" | "int16" | "q16" => Ok(QuantSetting::Int16),
            other => Err(format!("unknown quantization `{other}` (float|8|16)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantId {
    pub family: Family,
    pub upsample: Upsample,
    pub activation: Activation,
    /// Requested MAC reduction; 0 means unpruned.
    pub prune_target: f64,
    pub quant: QuantSetting,
}

impl VariantId {
    fn prune_bp(&self) -> u64 {
        (self.prune_target * 10_000.0).round() as u64
    }

    fn key(&self) -> (Family, Upsample, Activation, u64, QuantSetting) {
        (self.family, self.upsample, self.activation, self.prune_bp(), self.quant)
    }
}

impl Eq for VariantId {}

impl PartialOrd for VariantId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VariantId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bp = self.prune_bp();
        write!(
            f,
            "{}-{}-{}-p{:02}",
            self.family.short(),
            self.upsample.short(),
            self.activation.short(),
            bp / 100
        )?;
        if !bp.is_multiple_of(100) {
            write!(f, ".{:02}", bp % 100)?;
        }
        write!(f, "-{}", self.quant)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeviceStatus {
    Ok,
    DeploymentFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceResult {
    pub status: DeviceStatus,
    /// Absent when deployment fails.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    pub fallback_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericError {
    pub psnr_vs_float_db: Db,
    pub l2_per_pixel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub passes: Vec<String>,
    pub seed: u64,
    pub eval_hw: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub id: VariantId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_macs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved_reduction: Option<f64>,
    pub devices: BTreeMap<String, DeviceResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_error: Option<NumericError>,
    pub provenance: Provenance,
    /// Set when a stage failed; the remaining fields hold what was computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl VariantReport {
    pub fn quality(&self) -> Option<f64> {
        self.numeric_error.map(|e| e.psnr_vs_float_db.0)
    }

    pub fn latency(&self, device: &str) -> Option<f64> {
        self.devices.get(device)?.latency_ms
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierConfig {
    /// Family, base channels, depth, latency resolution and weight seed.
    pub base: ArchSpec,
    pub upsamples: Vec<Upsample>,
    pub activations: Vec<Activation>,
    pub prune_targets: Vec<f64>,
    pub quant: Vec<QuantSetting>,
    pub eval_hw: (usize, usize),
    pub calib_inputs: usize,
    pub probe_inputs: usize,
    pub variant_cap: usize,
    pub prune_options: PruneOptions,
}

impl FrontierConfig {
    pub fn new(base: ArchSpec) -> Self {
        Self {
            base,
            upsamples: Upsample::ALL.to_vec(),
            activations: Activation::ALL.to_vec(),
            prune_targets: vec![0.0, 0.05, 0.5],
            quant: vec![QuantSetting::Float, QuantSetting::Int8, QuantSetting::Int16],
            eval_hw: (64, 64),
            calib_inputs: 2,
            probe_inputs: 2,
            variant_cap: 256,
            prune_options: PruneOptions::default(),
        }
    }

    pub fn variant_count(&self) -> usize {
        self.upsamples.len() * self.activations.len() * self.prune_targets.len() * self.quant.len()
    }

    fn check(&self) -> Result<(), FrontierError> {
        let count = self.variant_count();
        if count > self.variant_cap {
            return Err(FrontierError::TooManyVariants { count, cap: self.variant_cap });
        }
        let bad = |m: String| Err(FrontierError::InvalidConfig(m));
        if count == 0 {
            return bad("empty variant grid".into());
        }
        if let Some(t) = self.prune_targets.iter().find(|t| !(**t >= 0.0 && **t < 1.0)) {
            return bad(format!("prune target {t} is outside [0, 1)"));
        }
        if self.probe_inputs == 0 || self.calib_inputs == 0 {
            return bad("calibration and probe counts must be positive".into());
        }
        Ok(())
    }

    fn input(&self, kind: u64, i: usize) -> Vec<Tensor> {
        let (h, w) = self.eval_hw;
        let seed = self.base.seed.wrapping_mul(0x9e37_79b9).wrapping_add(kind * 1_000 + i as u64);
        vec![Tensor::random([1, h, w, self.base.input.shape[3]], seed, 0.0, 1.0)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierReport {
    pub config: FrontierConfig,
    pub devices: Vec<String>,
    pub variants: Vec<VariantReport>,
    /// Device name -> names of frontier variants, in variant order.
    pub frontier: BTreeMap<String, Vec<String>>,
}

impl FrontierReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

pub fn enumerate_and_evaluate(config: &FrontierConfig, profiles: &[DeviceProfile]) -> Result<FrontierReport, FrontierError> {
    enumerate_and_evaluate_with(Parallelism::default(), config, profiles)
}

/// Evaluate every variant. Stage errors are recorded on the variant and
/// never abort the sweep; output order is by variant id.
pub fn enumerate_and_evaluate_with(
    par: Parallelism,
    config: &FrontierConfig,
    profiles: &[DeviceProfile],
) -> Result<FrontierReport, FrontierError> {
    config.check()?;
    let mut profiles = profiles.to_vec();
    profiles.sort_by(|a, b| a.name.cmp(&b.name));
    let mut archs = Vec::new();
    for &u in &config.upsamples {
        for &a in &config.activations {
            for &t in &config.prune_targets {
                archs.push((u, a, t));
            }
        }
    }
    let mut variants: Vec<VariantReport> = exec::map(par, &archs, |&(u, a, t)| evaluate_arch(config, &profiles, u, a, t))
        .into_iter()
        .flatten()
        .collect();
    variants.sort_by_key(|v| v.id);
    variants.dedup_by(|x, y| x.id == y.id);
    let devices: Vec<String> = profiles.iter().map(|p| p.name.clone()).collect();
    let frontier = devices
        .iter()
        .map(|d| {
            let idx = pareto(&variants, |r| r.quality(), |r| r.latency(d));
            (d.clone(), idx.into_iter().map(|i| variants[i].name.clone()).collect())
        })
        .collect();
    Ok(FrontierReport {
        config: config.clone(),
        devices,
        variants,
        frontier,
    })
}

fn evaluate_arch(
    config: &FrontierConfig,
    profiles: &[DeviceProfile],
    upsample: Upsample,
    activation: Activation,
    prune_target: f64,
) -> Vec<VariantReport> {
    let mut passes = vec![format!(
        "build {} {} {}",
        config.base.family.short(),
        upsample.short(),
        activation.short()
    )];
    if prune_target > 0.0 {
        passes.push(format!("prune {prune_target}"));
    }
    let blank = |quant: QuantSetting| {
        let id = VariantId {
            family: config.base.family,
            upsample,
            activation,
            prune_target,
            quant,
        };
        let mut p = passes.clone();
        if let Some(b) = quant.bits() {
            p.push(format!("quantize {b}"));
        }
        VariantReport {
            name: id.to_string(),
            id,
            total_macs: None,
            achieved_reduction: None,
            devices: BTreeMap::new(),
            numeric_error: None,
            provenance: Provenance {
                passes: p,
                seed: config.base.seed,
                eval_hw: config.eval_hw,
            },
            error: None,
        }
    };
    let mut reports: Vec<VariantReport> = config.quant.iter().map(|&q| blank(q)).collect();

    let spec = config.base.clone().with_upsample(upsample).with_activation(activation);
    let graph = match build_pruned(&spec, prune_target, &config.prune_options) {
        Ok(g) => g,
        Err(e) => {
            for r in &mut reports {
                r.error = Some(e.clone());
            }
            return reports;
        }
    };
    let (graph, achieved) = graph;
    let macs = crate::complexity::complexity(&graph).map(|c| c.total_macs).ok();

    for r in &mut reports {
        r.total_macs = macs;
        r.achieved_reduction = Some(achieved);
        for p in profiles {
            match device_result(&graph, p, r.id.quant.dtype()) {
                Ok(d) => {
                    r.devices.insert(p.name.clone(), d);
                }
                Err(e) => r.error = Some(format!("{}: {e}", p.name)),
            }
        }
    }

    match numerics(config, &graph, &config.quant) {
        Ok(errs) => {
            for (r, e) in reports.iter_mut().zip(errs) {
                match e {
                    Ok(e) => r.numeric_error = Some(e),
                    Err(e) => r.error = Some(e),
                }
            }
        }
        Err(e) => {
            for r in &mut reports {
                r.error = Some(e.clone());
            }
        }
    }
    reports
}

fn build_pruned(spec: &ArchSpec, target: f64, opts: &PruneOptions) -> Result<(Graph, f64), String> {
    let g = build(spec).map_err(|e| e.to_string())?;
    if target == 0.0 {
        return Ok((g, 0.0));
    }
    let r = prune(&g, target, opts).map_err(|e| e.to_string())?;
    Ok((r.graph, r.report.achieved_reduction))
}

fn device_result(graph: &Graph, profile: &DeviceProfile, dtype: DataType) -> Result<DeviceResult, String> {
    let plan = partition(graph, profile, dtype).map_err(|e| e.to_string())?;
    if !plan.deployable() {
        return Ok(DeviceResult {
            status: DeviceStatus::DeploymentFailed,
            latency_ms: None,
            fallback_count: plan.fallback_count(),
            failures: plan.failures.iter().map(|f| f.rule.to_string()).collect(),
        });
    }
    let est = estimate(graph, &plan, profile).map_err(|e| e.to_string())?;
    Ok(DeviceResult {
        status: DeviceStatus::Ok,
        latency_ms: Some(est.total_ms),
        fallback_count: plan.fallback_count(),
        failures: Vec::new(),
    })
}

/// Error of each quant setting against the f32 output of `graph`, sharing
/// the float reference runs and one calibration.
fn numerics(
    config: &FrontierConfig,
    graph: &Graph,
    settings: &[QuantSetting],
) -> Result<Vec<Result<NumericError, String>>, String> {
    let (h, w) = config.eval_hw;
    let small = graph.with_input_hw(h, w).map_err(|e| e.to_string())?;
    let probes: Vec<Vec<Tensor>> = (0..config.probe_inputs).map(|i| config.input(2, i)).collect();
    let reference = probes
        .iter()
        .map(|p| interp::run(&small, p, Precision::F32))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let needs_ranges = settings.iter().any(|q| q.bits().is_some());
    let ranges = if needs_ranges {
        let calib: Vec<Vec<Tensor>> = (0..config.calib_inputs).map(|i| config.input(1, i)).collect();
        Some(calibrate(&small, &calib).map_err(|e| e.to_string())?)
    } else {
        None
    };
    Ok(settings
        .iter()
        .map(|q| -> Result<NumericError, String> {
            let (candidate, prec) = match q.bits() {
                None => (small.clone(), Precision::EmulatedF16),
                Some(b) => (
                    quantize_graph(&small, b, ranges.as_ref().expect("ranges computed")).map_err(|e| e.to_string())?,
                    Precision::Quant,
                ),
            };
            let mut images = Vec::with_capacity(probes.len());
            for (p, r) in probes.iter().zip(&reference) {
                let out = interp::run(&candidate, p, prec).map_err(|e| e.to_string())?;
                images.push(compare_outputs(r, &out).map_err(|e| e.to_string())?);
            }
            let rep = ErrorReport::from_images(images);
            Ok(NumericError {
                psnr_vs_float_db: rep.psnr_db,
                l2_per_pixel: rep.l2_per_pixel,
            })
        })
        .collect())
}

/// Indices of items on the Pareto frontier (higher quality, lower latency),
/// in input order. Items missing either key are excluded. An item is
/// dominated if another has quality >= and latency <, or quality > and
/// latency <=.
pub fn pareto<T, Q, L>(items: &[T], quality: Q, latency: L) -> Vec<usize>
where
    Q: Fn(&T) -> Option<f64>,
    L: Fn(&T) -> Option<f64>,
{
    let mut pts: Vec<(usize, f64, f64)> = items
        .iter()
        .enumerate()
        .filter_map(|(i, x)| Some((i, quality(x)?, latency(x)?)))
        .filter(|(_, q, l)| !q.is_nan() && !l.is_nan())
        .collect();
    pts.sort_by(|a, b| a.2.total_cmp(&b.2).then(b.1.total_cmp(&a.1)));
    let mut keep = Vec::new();
    let mut best_before = f64::NEG_INFINITY;
    let mut i = 0;
    while i < pts.len() {
        let lat = pts[i].2;
        let mut j = i;
        while j < pts.len() && pts[j].2 == lat {
            j += 1;
        }
        // Sorted by quality descending within the latency tie.
        let top = pts[i].1;
        if top > best_before {
            keep.extend(pts[i..j].iter().filter(|p| p.1 == top).map(|p| p.0));
            best_before = top;
        }
        i = j;
    }
    keep.sort_unstable();
    keep
}

fn optimization_type(id: &VariantId) -> &'static str {
    match (id.prune_bp() > 0, id.quant != QuantSetting::Float) {
        (false, false) => "Baseline",
        (true, false) => "Pruning",
        (false, true) => "Quantization",
        (true, true) => "Pruning + Quantization",
    }
}

fn setting(id: &VariantId) -> String {
    let arch = format!("{}-{}", id.upsample.short(), id.activation.short());
    let mut parts = vec![arch];
    if id.prune_bp() > 0 {
        parts.push(format!("-{}% MAC", id.prune_target * 100.0));
    }
    if let Some(b) = id.quant.bits() {
        parts.push(format!("{b}-bit"));
    }
    parts.join(", ")
}

/// Aligned text table: optimization type, setting, GMAC, quality proxy and
/// one latency column per device (`Failed` when deployment fails).
pub fn summary_table(report: &FrontierReport) -> String {
    let mut header = vec![
        "Optimization Type".to_string(),
        "Setting".to_string(),
        "MAC (G)".to_string(),
        "PSNR vs float (dB)".to_string(),
    ];
    header.extend(report.devices.iter().map(|d| format!("{d} (ms)")));
    let mut rows = vec![header];
    for v in &report.variants {
        let mut row = vec![
            optimization_type(&v.id).to_string(),
            setting(&v.id),
            v.total_macs.map_or("-".into(), |m| format!("{:.2}", m as f64 / 1e9)),
            v.numeric_error.map_or("-".into(), |e| e.psnr_vs_float_db.to_string()),
        ];
        for d in &report.devices {
            row.push(match v.devices.get(d) {
                Some(r) if r.status == DeviceStatus::DeploymentFailed => "Failed".into(),
                Some(r) => r.latency_ms.map_or("-".into(), |l| format!("{l:.2}")),
                None => "-".into(),
            });
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| if c < 2 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
        if i == 0 {
            writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))).unwrap();
        }
    }
    for d in &report.devices {
        writeln!(out, "\nfrontier on {d}: {}", report.frontier[d].join(", ")).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn dominated_oracle(pts: &[(f64, f64)]) -> Vec<usize> {
        (0..pts.len())
            .filter(|&i| {
                !pts.iter().enumerate().any(|(j, o)| {
                    j != i && ((o.0 >= pts[i].0 && o.1 < pts[i].1) || (o.0 > pts[i].0 && o.1 <= pts[i].1))
                })
            })
            .collect()
    }

    fn front(pts: &[(f64, f64)]) -> Vec<usize> {
        pareto(pts, |p| Some(p.0), |p| Some(p.1))
    }

    #[test]
    fn pareto_small_cases() {
        assert_eq!(front(&[(1.0, 1.0)]), vec![0]);
        assert_eq!(front(&[(1.0, 2.0), (2.0, 1.0)]), vec![1]);
        assert_eq!(front(&[(1.0, 1.0), (1.0, 1.0)]), vec![0, 1]);
        assert_eq!(front(&[(f64::INFINITY, 5.0), (3.0, 1.0)]), vec![0, 1]);
        let missing: Vec<Option<f64>> = vec![None, Some(1.0)];
        assert_eq!(pareto(&missing, |q| *q, |_| Some(1.0)), vec![1]);
    }

    #[test]
    fn pareto_matches_quadratic_oracle() {
        let mut rng = SplitMix64::new(17);
        for round in 0..200 {
            let n = 1 + (round % 25);
            // Coarse grid so ties on either axis are common.
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.below(6) as f64, rng.below(6) as f64)).collect();
            assert_eq!(front(&pts), dominated_oracle(&pts), "{pts:?}");
        }
    }

    #[test]
    fn variant_names_and_order() {
        let id = |u, q, t| VariantId {
            family: Family::Unet,
            upsample: u,
            activation: Activation::Prelu,
            prune_target: t,
            quant: q,
        };
        assert_eq!(id(Upsample::ResizeBilinear, QuantSetting::Int8, 0.05).to_string(), "unet-bilinear-prelu-p05-int8");
        assert_eq!(id(Upsample::TransposeConv, QuantSetting::Float, 0.125).to_string(), "unet-tc-prelu-p12.50-float");
        assert!(id(Upsample::TransposeConv, QuantSetting::Int16, 0.0) < id(Upsample::TransposeConv, QuantSetting::Float, 0.05));
        assert_eq!("16".parse::<QuantSetting>().unwrap(), QuantSetting::Int16);
        assert!("4".parse::<QuantSetting>().is_err());
    }

    fn tiny_config() -> FrontierConfig {
        let mut base = ArchSpec::default_for(Family::Unet).with_input_hw(64, 64).with_seed(3);
        base.depth = 2;
        base.base_channels = 8;
        let mut c = FrontierConfig::new(base);
        c.eval_hw = (16, 16);
        c.prune_targets = vec![0.0, 0.3];
        c
    }

    #[test]
    fn sweep_is_complete_and_deterministic() {
        let c = tiny_config();
        let profiles = DeviceProfile::all_bundled();
        let a = enumerate_and_evaluate_with(Parallelism::Parallel, &c, &profiles).unwrap();
        let b = enumerate_and_evaluate_with(Parallelism::Sequential, &c, &profiles).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.variants.len(), c.variant_count());
        assert!(a.variants.windows(2).all(|w| w[0].id < w[1].id));
        for v in &a.variants {
            assert!(v.error.is_none(), "{}: {:?}", v.name, v.error);
            assert_eq!(v.devices.len(), 3);
            for d in v.devices.values() {
                assert_eq!(d.status == DeviceStatus::DeploymentFailed, d.latency_ms.is_none());
            }
            let e = v.numeric_error.unwrap();
            assert!(e.psnr_vs_float_db.0 > 0.0);
        }
        for (d, names) in &a.frontier {
            assert!(!names.is_empty(), "{d}");
            assert!(names.iter().all(|n| a.variants.iter().any(|v| &v.name == n)));
        }
        let table = summary_table(&a);
        assert_eq!(table.lines().filter(|l| l.contains("Pruning + Quantization")).count(), 2 * 3 * 2);
        assert!(table.contains("Failed"));
    }

    #[test]
    fn mate30_fallbacks_follow_upsample() {
        let c = tiny_config();
        let p = DeviceProfile::bundled("mate30-like").unwrap();
        let r = enumerate_and_evaluate(&c, &[p]).unwrap();
        for v in &r.variants {
            if v.id.quant == QuantSetting::Int16 {
                continue;
            }
            let n = v.devices["mate30-like"].fallback_count;
            // Quantized PRELU itself falls back on this profile.
            let prelu_q8 = v.id.quant == QuantSetting::Int8 && v.id.activation == Activation::Prelu;
            match v.id.upsample {
                Upsample::TransposeConv => assert!(n > 0, "{}", v.name),
                Upsample::DepthToSpace if prelu_q8 => assert!(n > 0, "{}", v.name),
                Upsample::DepthToSpace => assert_eq!(n, 0, "{}", v.name),
                Upsample::ResizeBilinear => {}
            }
        }
    }

    #[test]
    fn cap_and_stage_errors() {
        let mut c = tiny_config();
        c.variant_cap = 10;
        assert!(matches!(
            enumerate_and_evaluate(&c, &[]),
            Err(FrontierError::TooManyVariants { count: 36, cap: 10 })
        ));
        let mut c = tiny_config();
        c.prune_targets = vec![0.0, 0.99];
        c.quant = vec![QuantSetting::Float];
        let r = enumerate_and_evaluate(&c, &DeviceProfile::all_bundled()).unwrap();
        assert_eq!(r.variants.len(), 12);
        assert!(r.variants.iter().filter(|v| v.id.prune_bp() > 0).all(|v| v.error.is_some()));
        assert!(r.variants.iter().filter(|v| v.id.prune_bp() == 0).all(|v| v.error.is_none()));
        c.prune_targets = vec![1.5];
        assert!(matches!(enumerate_and_evaluate(&c, &[]), Err(FrontierError::InvalidConfig(_))));
    }
}
