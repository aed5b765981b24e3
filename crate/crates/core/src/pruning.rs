//! Structured channel pruning toward a MAC-reduction target.
//!
//! Channels are pruned per *channel group*: the set of tensors whose channel
//! counts must stay equal (a conv output and everything it flows into
//! through activations, pooling, resizes and ADD/MUL joins). Groups touching
//! a graph input or output are fixed. Each free group of original size `C`
//! becomes `round(alpha * C / align) * align`, clamped to
//! `[floor, C]`, and `alpha` is found by bisection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{validate, Graph, GraphError, OpKind, WeightTensor};

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("target reduction must be in (0, 1), got {0}")]
    InvalidTarget(f64),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("target reduction {target:.3} is out of reach; channel floors allow at most {max_reduction:.3}")]
    InfeasibleTarget { target: f64, max_reduction: f64 },
    #[error("graph carries quantization parameters; prune the float graph and quantize afterwards")]
    Quantized,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrunePolicy {
    /// One global scale factor for every free group.
    #[default]
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneOptions {
    pub round_to: usize,
    pub min_channels: usize,
    pub tolerance: f64,
    pub policy: PrunePolicy,
}

impl Default for PruneOptions {
    fn default() -> Self {
        Self {
            round_to: 4,
            min_channels: 4,
            tolerance: 0.02,
            policy: PrunePolicy::Uniform,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum PruneWarning {
    /// No reachable configuration lands within tolerance; the nearest was kept.
    Tolerance { target: f64, achieved: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub target_reduction: f64,
    pub achieved_reduction: f64,
    pub alpha: f64,
    pub original_macs: u64,
    pub pruned_macs: u64,
    /// Node id -> (old output channels, new output channels), every node.
    pub per_layer: BTreeMap<String, (usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<PruneWarning>,
}

#[derive(Clone, Debug)]
pub struct PruneResult {
    pub graph: Graph,
    pub report: PruneReport,
}

/// Channel count as a sum of `size(group) * num / den` terms.
type Expr = BTreeMap<usize, (u64, u64)>;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

#[derive(Clone, Debug)]
struct Group {
    orig: usize,
    align: u64,
    fixed: bool,
    parent: usize,
}

#[derive(Clone, Debug)]
struct MacTerm {
    /// MACs per (input channel * output channel).
    factor: u64,
    cin: Expr,
    cout: Expr,
}

/// Channel-group analysis of a resolved float graph.
#[derive(Clone, Debug)]
struct Analysis {
    groups: Vec<Group>,
    exprs: BTreeMap<String, Expr>,
    terms: Vec<MacTerm>,
    original_macs: u64,
}

impl Analysis {
    fn find(&self, mut g: usize) -> usize {
        while self.groups[g].parent != g {
            g = self.groups[g].parent;
        }
        g
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.groups[hi].parent = lo;
            self.groups[lo].fixed |= self.groups[hi].fixed;
            self.groups[lo].align = lcm(self.groups[lo].align, self.groups[hi].align);
        }
    }

    fn new_group(&mut self, orig: usize, fixed: bool, round_to: u64) -> usize {
        let id = self.groups.len();
        self.groups.push(Group {
            orig,
            align: round_to,
            fixed,
            parent: id,
        });
        id
    }

    fn fix(&mut self, e: &Expr) {
        for &g in e.keys() {
            let r = self.find(g);
            self.groups[r].fixed = true;
        }
    }

    fn build(graph: &Graph, round_to: u64) -> Result<Self, GraphError> {
        let mut a = Analysis {
            groups: Vec::new(),
            exprs: BTreeMap::new(),
            terms: Vec::new(),
            original_macs: 0,
        };
        let single = |g: usize| -> Expr { [(g, (1, 1))].into_iter().collect() };
        for i in &graph.inputs {
            let g = a.new_group(i.shape[3], true, round_to);
            a.exprs.insert(i.name.clone(), single(g));
        }
        for &idx in &crate::graph::topo_order(graph)? {
            let node = &graph.nodes[idx];
            let input = |k: usize| a.exprs[&node.inputs[k]].clone();
            let cout = graph.spec(&node.output)?.shape[3];
            let expr = match node.kind {
                OpKind::Conv2d | OpKind::TransposeConv2d | OpKind::FullyConnected => {
                    let cin_expr = input(0);
                    let fixed = node.kind == OpKind::FullyConnected;
                    if fixed {
                        a.fix(&cin_expr);
                    }
                    let g = a.new_group(cout, fixed, round_to);
                    let macs = crate::complexity::macs_of_node(graph, node)?;
                    let cin = graph.spec(&node.inputs[0])?.shape[3] as u64;
                    a.original_macs += macs;
                    a.terms.push(MacTerm {
                        factor: macs / (cin * cout as u64),
                        cin: cin_expr,
                        cout: single(g),
                    });
                    single(g)
                }
                OpKind::DepthToSpace => {
                    let b = node.int_attr("block_size").unwrap_or(1) as u64;
                    let mut e = input(0);
                    for (&g, (num, den)) in e.iter_mut() {
                        *den *= b * b;
                        let need = *den / gcd(*num, *den);
                        let r = a.find(g);
                        a.groups[r].align = lcm(a.groups[r].align, need);
                    }
                    e
                }
                OpKind::SpaceToDepth => {
                    let b = node.int_attr("block_size").unwrap_or(1) as u64;
                    let mut e = input(0);
                    for (num, _) in e.values_mut() {
                        *num *= b * b;
                    }
                    e
                }
                OpKind::Concatenation => {
                    let mut e = Expr::new();
                    for k in 0..node.inputs.len() {
                        for (g, (num, den)) in input(k) {
                            let (n0, d0) = e.get(&g).copied().unwrap_or((0, 1));
                            let (n, d) = (n0 * den + num * d0, d0 * den);
                            let c = gcd(n, d);
                            e.insert(g, (n / c, d / c));
                        }
                    }
                    e
                }
                OpKind::Add | OpKind::Mul => {
                    let (x, y) = (input(0), input(1));
                    let same_single = x.len() == 1 && y.len() == 1 && x.values().next() == y.values().next();
                    if same_single {
                        let (gx, gy) = (*x.keys().next().unwrap(), *y.keys().next().unwrap());
                        a.union(gx, gy);
                    } else if x != y {
                        a.fix(&x);
                        a.fix(&y);
                    }
                    x
                }
                OpKind::Relu
                | OpKind::Prelu
                | OpKind::ResizeBilinear
                | OpKind::ResizeNearest
                | OpKind::MaxPool2d
                | OpKind::AvgPool2d => input(0),
            };
            a.exprs.insert(node.output.clone(), expr);
        }
        for o in &graph.outputs {
            let e = a.exprs[o].clone();
            a.fix(&e);
        }
        Ok(a)
    }

    fn roots(&self) -> Vec<usize> {
        (0..self.groups.len()).filter(|&g| self.find(g) == g).collect()
    }

    fn free_roots(&self) -> Vec<usize> {
        self.roots().into_iter().filter(|&g| !self.groups[g].fixed).collect()
    }

    fn floor(&self, root: usize, min_channels: usize) -> usize {
        let align = self.groups[root].align as usize;
        min_channels.div_ceil(align).max(1) * align
    }

    /// Size per root for a uniform scale factor.
    fn uniform(&self, alpha: f64, min_channels: usize) -> BTreeMap<usize, usize> {
        self.roots()
            .into_iter()
            .map(|r| {
                let g = &self.groups[r];
                if g.fixed || alpha >= 1.0 {
                    return (r, g.orig);
                }
                let align = g.align as f64;
                let scaled = ((alpha * g.orig as f64 / align).round() * align) as usize;
                (r, scaled.max(self.floor(r, min_channels)).min(g.orig))
            })
            .collect()
    }

    fn eval(&self, e: &Expr, sizes: &BTreeMap<usize, usize>) -> usize {
        let total: u64 = e
            .iter()
            .map(|(&g, &(num, den))| {
                let v = sizes[&self.find(g)] as u64 * num;
                debug_assert_eq!(v % den, 0, "alignment keeps channel counts integral");
                v / den
            })
            .sum();
        total as usize
    }

    fn macs(&self, sizes: &BTreeMap<usize, usize>) -> u64 {
        self.terms
            .iter()
            .map(|t| t.factor * self.eval(&t.cin, sizes) as u64 * self.eval(&t.cout, sizes) as u64)
            .sum()
    }

    fn reduction(&self, sizes: &BTreeMap<usize, usize>) -> f64 {
        if self.original_macs == 0 {
            return 0.0;
        }
        1.0 - self.macs(sizes) as f64 / self.original_macs as f64
    }

    /// MACs of every layer that reads or writes `root`.
    fn involvement(&self, root: usize, sizes: &BTreeMap<usize, usize>) -> u64 {
        self.terms
            .iter()
            .filter(|t| t.cin.keys().chain(t.cout.keys()).any(|&g| self.find(g) == root))
            .map(|t| t.factor * self.eval(&t.cin, sizes) as u64 * self.eval(&t.cout, sizes) as u64)
            .sum()
    }
}

/// Prune `graph` so its total MACs drop by `target` (a fraction).
pub fn prune(graph: &Graph, target: f64, opts: &PruneOptions) -> Result<PruneResult, PruneError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(PruneError::InvalidTarget(target));
    }
    if opts.round_to == 0 || opts.min_channels == 0 || !(opts.tolerance >= 0.0) {
        return Err(PruneError::InvalidOptions(format!(
            "round_to {}, min_channels {}, tolerance {}",
            opts.round_to, opts.min_channels, opts.tolerance
        )));
    }
    if graph.quant.is_some() {
        return Err(PruneError::Quantized);
    }
    let v = validate(graph);
    if !v.is_empty() {
        return Err(GraphError::Invalid(v).into());
    }
    let graph = if graph.is_resolved() { graph.clone() } else { graph.resolved()? };
    let a = Analysis::build(&graph, opts.round_to as u64)?;
    let tol = opts.tolerance;

    let floor = a.uniform(0.0, opts.min_channels);
    let max_reduction = a.reduction(&floor);
    if max_reduction < target - tol {
        return Err(PruneError::InfeasibleTarget { target, max_reduction });
    }

    // Invariant: reduction(lo) >= target > reduction(hi).
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (alpha, sizes) = if max_reduction < target {
        (0.0, floor)
    } else {
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if a.reduction(&a.uniform(mid, opts.min_channels)) >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut candidates = vec![(lo, a.uniform(lo, opts.min_channels)), (hi, a.uniform(hi, opts.min_channels))];
        let hi_r = a.reduction(&candidates[1].1);
        if (target - hi_r).abs() > tol && (a.reduction(&candidates[0].1) - target).abs() > tol {
            candidates.push((hi, refine(&a, candidates[1].1.clone(), target, opts)));
        }
        candidates
            .into_iter()
            .min_by(|x, y| {
                let dx = (a.reduction(&x.1) - target).abs();
                let dy = (a.reduction(&y.1) - target).abs();
                dx.total_cmp(&dy)
            })
            .expect("at least two candidates")
    };

    let achieved = a.reduction(&sizes);
    let pruned = apply(&graph, &a, &sizes)?;
    let per_layer = graph
        .nodes
        .iter()
        .map(|n| {
            let old = graph.tensors[&n.output].shape[3];
            let new = pruned.tensors[&n.output].shape[3];
            (n.id.clone(), (old, new))
        })
        .collect();
    let warning = ((achieved - target).abs() > tol).then_some(PruneWarning::Tolerance { target, achieved });
    Ok(PruneResult {
        report: PruneReport {
            target_reduction: target,
            achieved_reduction: achieved,
            alpha,
            original_macs: a.original_macs,
            pruned_macs: a.macs(&sizes),
            per_layer,
            warning,
        },
        graph: pruned,
    })
}

/// From an under-reduced configuration, step the free group with the
/// largest MAC involvement down by one alignment unit until the reduction
/// reaches `target - tolerance` or nothing is left to shrink.
fn refine(a: &Analysis, mut sizes: BTreeMap<usize, usize>, target: f64, opts: &PruneOptions) -> BTreeMap<usize, usize> {
    let free = a.free_roots();
    while a.reduction(&sizes) < target - opts.tolerance {
        let pick = free
            .iter()
            .copied()
            .filter(|&r| sizes[&r] >= a.floor(r, opts.min_channels) + a.groups[r].align as usize)
            .max_by(|&x, &y| a.involvement(x, &sizes).cmp(&a.involvement(y, &sizes)).then(y.cmp(&x)));
        match pick {
            Some(r) => *sizes.get_mut(&r).unwrap() -= a.groups[r].align as usize,
            None => break,
        }
    }
    sizes
}

/// Rewrite filter/slope shapes for new channel counts. Resized weights are
/// re-initialized from the graph seed; untouched ones keep their values.
fn apply(graph: &Graph, a: &Analysis, sizes: &BTreeMap<usize, usize>) -> Result<Graph, GraphError> {
    let mut g = graph.clone();
    let seed = g.seed;
    for node in &graph.nodes {
        let Some(w) = &node.weights else { continue };
        let cin = a.eval(&a.exprs[&node.inputs[0]], sizes);
        let cout = a.eval(&a.exprs[&node.output], sizes);
        let old = &graph.weights[&w.filter];
        let (shape, fan_in) = match node.kind {
            OpKind::Conv2d | OpKind::TransposeConv2d => {
                let (kh, kw) = (old.shape[1], old.shape[2]);
                (vec![cout, kh, kw, cin], kh * kw * cin)
            }
            OpKind::FullyConnected => (old.shape.clone(), old.shape[1]),
            _ => (vec![cin], 0),
        };
        if shape == old.shape {
            continue;
        }
        let fresh = if node.kind == OpKind::Prelu {
            WeightTensor::filled(shape, 0.25)
        } else {
            WeightTensor::init_uniform(&w.filter, shape, fan_in, seed)
        };
        g.weights.insert(w.filter.clone(), fresh);
        if let Some(b) = &w.bias {
            if graph.weights[b].shape != [cout] {
                g.weights
                    .insert(b.clone(), WeightTensor::init_uniform(b, vec![cout], fan_in, seed));
            }
        }
    }
    g.tensors.clear();
    g.resolved()
}
