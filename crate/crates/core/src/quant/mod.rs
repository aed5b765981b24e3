//! Post-training quantization: range calibration, per-tensor schemes,
//! quantized-graph production, fake-quant evaluation and error reporting.

mod scheme;

pub use scheme::{round_half_even, IntTensor, QuantInfo, QuantMode, QuantScheme, DEGENERATE_WIDTH};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Parallelism};
use crate::graph::{DataType, Graph, GraphError};
use crate::interp::{self, InterpError, Mode, Precision};
use crate::metrics::{self, Db, MetricError};
use crate::tensor::Tensor;

/// Calibrated `(min, max)` per tensor or weight name.
pub type Ranges = BTreeMap<String, (f32, f32)>;

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("invalid range [{min}, {max}]")]
    InvalidRange { min: f32, max: f32 },
    #[error("unsupported bit width {0} (expected 8 or 16)")]
    UnsupportedBits(u8),
    #[error("calibration needs at least one input set")]
    EmptyCalibration,
    #[error("no calibrated range for `{0}`")]
    MissingRange(String),
    #[error("graphs differ in topology: {0}")]
    TopologyMismatch(String),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

fn merge_ranges(mut a: Ranges, b: Ranges) -> Ranges {
    for (k, (lo, hi)) in b {
        a.entry(k)
            .and_modify(|r| {
                r.0 = r.0.min(lo);
                r.1 = r.1.max(hi);
            })
            .or_insert((lo, hi));
    }
    a
}

fn values_range(data: &[f32]) -> (f32, f32) {
    data.iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Running min/max of every activation tensor over all calibration passes,
/// plus the range of every quantizable weight (filters and PRELU slopes).
pub fn calibrate(graph: &Graph, calib_inputs: &[Vec<Tensor>]) -> Result<Ranges, QuantError> {
    calibrate_with(Parallelism::default(), graph, calib_inputs)
}

pub fn calibrate_with(par: Parallelism, graph: &Graph, calib_inputs: &[Vec<Tensor>]) -> Result<Ranges, QuantError> {
    if calib_inputs.is_empty() {
        return Err(QuantError::EmptyCalibration);
    }
    let graph = graph.resolved()?;
    let pass = |inputs: &Vec<Tensor>| -> Result<Ranges, QuantError> {
        let exec = interp::trace(&graph, inputs)?;
        Ok(exec
            .values
            .iter()
            .map(|(k, t)| (k.clone(), values_range(&t.data)))
            .collect())
    };
    let mut ranges = exec::map_reduce(par, calib_inputs, pass, |a, b| Ok(merge_ranges(a?, b?)))
        .expect("non-empty")?;
    for node in &graph.nodes {
        if let Some(w) = &node.weights {
            let t = &graph.weights[&w.filter];
            ranges.insert(w.filter.clone(), values_range(&t.data));
        }
    }
    Ok(ranges)
}

fn range_of(ranges: &Ranges, name: &str) -> Result<(f32, f32), QuantError> {
    ranges
        .get(name)
        .copied()
        .ok_or_else(|| QuantError::MissingRange(name.to_string()))
}

/// Schemes and integer weights for `graph` under the given ranges.
///
/// Weights absent from `ranges` take their range from the stored values.
/// Biases become int32 codes with scale `s_in * s_filter`.
pub fn quant_info(graph: &Graph, bits: u8, ranges: &Ranges, mode: QuantMode) -> Result<QuantInfo, QuantError> {
    if bits != 8 && bits != 16 {
        return Err(QuantError::UnsupportedBits(bits));
    }
    let mut schemes = BTreeMap::new();
    for name in graph.tensors.keys() {
        let (lo, hi) = range_of(ranges, name)?;
        schemes.insert(name.clone(), QuantScheme::from_range(bits, lo, hi, mode)?);
    }
    let mut qweights = BTreeMap::new();
    for node in &graph.nodes {
        let Some(w) = &node.weights else { continue };
        let stored = graph
            .weights
            .get(&w.filter)
            .ok_or_else(|| QuantError::MissingRange(w.filter.clone()))?;
        let (lo, hi) = ranges
            .get(&w.filter)
            .copied()
            .unwrap_or_else(|| values_range(&stored.data));
        let fs = QuantScheme::from_range(bits, lo, hi, mode)?;
        qweights.insert(
            w.filter.clone(),
            IntTensor {
                shape: stored.shape.clone(),
                data: stored.data.iter().map(|&v| fs.quantize(v as f64) as i64).collect(),
            },
        );
        schemes.insert(w.filter.clone(), fs);
        if let Some(b) = &w.bias {
            let s_in = schemes[&node.inputs[0]].scale;
            let bias = &graph.weights[b];
            qweights.insert(
                b.clone(),
                IntTensor {
                    shape: bias.shape.clone(),
                    data: bias.data.iter().map(|&v| interp::bias_code(v, s_in * fs.scale, bits)).collect(),
                },
            );
        }
    }
    Ok(QuantInfo {
        bits,
        mode,
        schemes,
        qweights,
    })
}

/// Attach 8- or 16-bit schemes to every tensor and integer codes to every
/// weight. Float weights stay in the weight store for error reporting.
pub fn quantize_graph(graph: &Graph, bits: u8, ranges: &Ranges) -> Result<Graph, QuantError> {
    quantize_graph_mode(graph, bits, ranges, QuantMode::Ptq)
}

pub fn quantize_graph_mode(graph: &Graph, bits: u8, ranges: &Ranges, mode: QuantMode) -> Result<Graph, QuantError> {
    let mut g = graph.resolved()?;
    let info = quant_info(&g, bits, ranges, mode)?;
    let dtype = if bits == 8 { DataType::Q8 } else { DataType::Q16 };
    for spec in g.tensors.values_mut() {
        spec.dtype = dtype;
    }
    for spec in g.inputs.iter_mut() {
        spec.dtype = dtype;
    }
    g.quant = Some(info);
    Ok(g)
}

/// Float execution with quantize/dequantize at every tensor boundary
/// (inputs, weights, biases, node outputs).
pub fn fake_quant_run(graph: &Graph, ranges: &Ranges, bits: u8, inputs: &[Tensor]) -> Result<Vec<Tensor>, QuantError> {
    let g = graph.resolved()?;
    let info = quant_info(&g, bits, ranges, QuantMode::FakeQuant)?;
    let exec = interp::execute(&g, inputs, Mode::FakeQuant(&info), false)?;
    Ok(interp::collect_outputs(&g, exec))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageError {
    pub psnr_db: Db,
    pub l2_per_pixel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Mean PSNR over probes (peak 1.0); `inf` if any probe matched exactly.
    pub psnr_db: Db,
    /// Standard deviation of the finite per-probe PSNRs.
    pub psnr_std_db: f64,
    pub l2_per_pixel: f64,
    pub l2_std: f64,
    pub per_image: Vec<ImageError>,
}

impl ErrorReport {
    pub fn from_images(per_image: Vec<ImageError>) -> Self {
        let n = per_image.len().max(1) as f64;
        let finite: Vec<f64> = per_image
            .iter()
            .map(|e| e.psnr_db.0)
            .filter(|v| v.is_finite())
            .collect();
        let psnr = if finite.len() < per_image.len() || per_image.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / n
        };
        let l2: Vec<f64> = per_image.iter().map(|e| e.l2_per_pixel).collect();
        let l2_mean = l2.iter().sum::<f64>() / n;
        Self {
            psnr_db: Db(psnr),
            psnr_std_db: std_dev(&finite),
            l2_per_pixel: l2_mean,
            l2_std: std_dev(&l2),
            per_image,
        }
    }
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn check_topology(a: &Graph, b: &Graph) -> Result<(), QuantError> {
    let mismatch = |what: String| Err(QuantError::TopologyMismatch(what));
    if a.inputs.len() != b.inputs.len() || a.outputs != b.outputs {
        return mismatch("inputs or outputs differ".into());
    }
    for (x, y) in a.inputs.iter().zip(&b.inputs) {
        if x.name != y.name || x.shape != y.shape {
            return mismatch(format!("input `{}` vs `{}`", x.name, y.name));
        }
    }
    if a.nodes.len() != b.nodes.len() {
        return mismatch(format!("{} vs {} nodes", a.nodes.len(), b.nodes.len()));
    }
    let key = |g: &Graph| {
        let mut v: Vec<_> = g
            .nodes
            .iter()
            .map(|n| (n.id.clone(), n.kind, n.inputs.clone(), n.output.clone()))
            .collect();
        v.sort();
        v
    };
    let (ka, kb) = (key(a), key(b));
    for (x, y) in ka.iter().zip(&kb) {
        if x != y {
            return mismatch(format!("node `{}` vs `{}`", x.0, y.0));
        }
    }
    Ok(())
}

/// Compare concatenated outputs of two runs.
pub fn compare_outputs(reference: &[Tensor], candidate: &[Tensor]) -> Result<ImageError, QuantError> {
    if reference.len() != candidate.len() {
        return Err(QuantError::TopologyMismatch(format!(
            "{} vs {} outputs",
            reference.len(),
            candidate.len()
        )));
    }
    let mut sq = 0.0f64;
    let mut n = 0usize;
    for (a, b) in reference.iter().zip(candidate) {
        let l2 = metrics::l2_per_pixel(a, b)?;
        sq += l2 * a.len() as f64;
        n += a.len();
    }
    let mse = if n == 0 { 0.0 } else { sq / n as f64 };
    Ok(ImageError {
        psnr_db: metrics::psnr_from_mse(mse, 1.0),
        l2_per_pixel: mse,
    })
}

/// Run both graphs on every probe and report PSNR / per-pixel L2 of the
/// quantized outputs against the float ones. A graph carrying quantization
/// parameters runs in fixed point, otherwise in f32.
pub fn error_report(graph_float: &Graph, graph_quant: &Graph, probes: &[Vec<Tensor>]) -> Result<ErrorReport, QuantError> {
    let prec = if graph_quant.quant.is_some() {
        Precision::Quant
    } else {
        Precision::F32
    };
    error_report_with(Parallelism::default(), graph_float, Precision::F32, graph_quant, prec, probes)
}

/// [`error_report`] with explicit precisions for both sides.
pub fn error_report_with(
    par: Parallelism,
    reference: &Graph,
    reference_precision: Precision,
    candidate: &Graph,
    candidate_precision: Precision,
    probes: &[Vec<Tensor>],
) -> Result<ErrorReport, QuantError> {
    check_topology(reference, candidate)?;
    let per_image = exec::map(par, probes, |inputs| -> Result<ImageError, QuantError> {
        let a = interp::run(reference, inputs, reference_precision)?;
        let b = interp::run(candidate, inputs, candidate_precision)?;
        compare_outputs(&a, &b)
    });
    Ok(ErrorReport::from_images(per_image.into_iter().collect::<Result<_, _>>()?))
}
