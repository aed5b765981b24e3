//! Parameterized builders for candidate restoration architectures.
//!
//! Every family maps an RGB image to an RGB image of the same size. Defaults
//! are sized so that a 1280x720 input costs roughly 250 GMAC.
//!
//! `depth` means: UNET levels, EDSR_LIKE residual blocks, RDN_LIKE dense
//! blocks, DBPN_LIKE down/up projection pairs, FPN_LIKE pyramid levels and
//! SGN_LIKE shuffle levels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{validate, DataType, Graph, GraphBuilder, GraphError, OpKind, TensorSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    Unet,
    EdsrLike,
    RdnLike,
    DbpnLike,
    FpnLike,
    SgnLike,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Upsample {
    TransposeConv,
    DepthToSpace,
    ResizeBilinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Activation {
    Relu,
    Prelu,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Unet,
        Family::EdsrLike,
        Family::RdnLike,
        Family::DbpnLike,
        Family::FpnLike,
        Family::SgnLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Unet => "UNET",
            Family::EdsrLike => "EDSR_LIKE",
            Family::RdnLike => "RDN_LIKE",
            Family::DbpnLike => "DBPN_LIKE",
            Family::FpnLike => "FPN_LIKE",
            Family::SgnLike => "SGN_LIKE",
        }
    }

    /// Lowercase label used in variant names and on the command line.
    pub fn short(self) -> &'static str {
        match self {
            Family::Unet => "unet",
            Family::EdsrLike => "edsr",
            Family::RdnLike => "rdn",
            Family::DbpnLike => "dbpn",
            Family::FpnLike => "fpn",
            Family::SgnLike => "sgn",
        }
    }
}

impl Upsample {
    pub const ALL: [Upsample; 3] = [Upsample::TransposeConv, Upsample::DepthToSpace, Upsample::ResizeBilinear];

    /// Short label used in variant names: `tc`, `d2s`, `bilinear`.
    pub fn short(self) -> &'static str {
        match self {
            Upsample::TransposeConv => "tc",
            Upsample::DepthToSpace => "d2s",
            Upsample::ResizeBilinear => "bilinear",
        }
    }
}

impl Activation {
    pub const ALL: [Activation; 2] = [Activation::Relu, Activation::Prelu];

    pub fn op(self) -> OpKind {
        match self {
            Activation::Relu => OpKind::Relu,
            Activation::Prelu => OpKind::Prelu,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Prelu => "prelu",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unet" => Ok(Family::Unet),
            "edsr" | "edsr_like" => Ok(Family::EdsrLike),
            "rdn" | "rdn_like" => Ok(Family::RdnLike),
            "dbpn" | "dbpn_like" => Ok(Family::DbpnLike),
            "fpn" | "fpn_like" => Ok(Family::FpnLike),
            "sgn" | "sgn_like" => Ok(Family::SgnLike),
            _ => Err(format!("unknown family `{s}` (unet|edsr|rdn|dbpn|fpn|sgn)")),
        }
    }
}

impl FromStr for Upsample {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tc" | "transpose_conv" => Ok(Upsample::TransposeConv),
            "d2s" | "depth_to_space" => Ok(Upsample::DepthToSpace),
            "bilinear" | "resize_bilinear" => Ok(Upsample::ResizeBilinear),
            _ => Err(format!("unknown upsample `{s}` (tc|d2s|bilinear)")),
        }
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "prelu" => Ok(Activation::Prelu),
            _ => Err(format!("unknown activation `{s}` (relu|prelu)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub family: Family,
    pub upsample: Upsample,
    pub activation: Activation,
    pub base_channels: usize,
    pub depth: usize,
    pub input: TensorSpec,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// 1280x720 RGB input.
pub fn hd_input() -> TensorSpec {
    TensorSpec::new("input", [1, 720, 1280, 3], DataType::F32)
}

impl ArchSpec {
    /// Default configuration of a family at 720p.
    pub fn default_for(family: Family) -> Self {
        let (upsample, base_channels, depth) = match family {
            Family::Unet => (Upsample::TransposeConv, 32, 5),
            Family::EdsrLike => (Upsample::TransposeConv, 32, 14),
            Family::RdnLike => (Upsample::TransposeConv, 32, 7),
            Family::DbpnLike => (Upsample::TransposeConv, 32, 5),
            Family::FpnLike => (Upsample::TransposeConv, 52, 4),
            Family::SgnLike => (Upsample::DepthToSpace, 40, 4),
        };
        Self {
            family,
            upsample,
            activation: Activation::Relu,
            base_channels,
            depth,
            input: hd_input(),
            seed: 0,
        }
    }

    pub fn with_upsample(mut self, upsample: Upsample) -> Self {
        self.upsample = upsample;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_input_hw(mut self, height: usize, width: usize) -> Self {
        self.input.shape[1] = height;
        self.input.shape[2] = width;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Spatial divisor the input height and width must be a multiple of.
    pub fn spatial_divisor(&self) -> usize {
        match self.family {
            Family::Unet | Family::FpnLike | Family::SgnLike => 1 << (self.depth.saturating_sub(1)),
            Family::DbpnLike => 2,
            Family::EdsrLike | Family::RdnLike => 1,
        }
    }

    pub fn check(&self) -> Result<(), ZooError> {
        let bad = |m: String| Err(ZooError::InvalidSpec(m));
        if self.base_channels == 0 {
            return bad("base_channels must be positive".into());
        }
        let min_depth = match self.family {
            Family::Unet | Family::FpnLike | Family::SgnLike => 2,
            _ => 1,
        };
        if self.depth < min_depth {
            return bad(format!("{} needs depth >= {min_depth}, got {}", self.family, self.depth));
        }
        if self.family == Family::RdnLike && self.base_channels % 2 != 0 {
            return bad("RDN_LIKE base_channels must be even (growth rate is half of it)".into());
        }
        if self.family == Family::FpnLike && self.base_channels % 2 != 0 {
            return bad("FPN_LIKE base_channels must be even".into());
        }
        let [n, h, w, c] = self.input.shape;
        if n == 0 || c == 0 {
            return bad(format!("input shape {:?} has an empty dimension", self.input.shape));
        }
        let d = self.spatial_divisor();
        if h == 0 || w == 0 || h % d != 0 || w % d != 0 {
            return bad(format!("{} at depth {} needs H and W divisible by {d}, got {h}x{w}", self.family, self.depth));
        }
        Ok(())
    }
}

/// Up-sampling site: x2 spatially, to `cout` channels. `tc_kernel` is the
/// transpose-conv kernel size for the family.
fn upsample(b: &mut GraphBuilder, x: &str, cout: usize, kind: Upsample, tc_kernel: usize) -> String {
    match kind {
        Upsample::TransposeConv => b.transpose_conv(x, cout, tc_kernel, 2),
        Upsample::DepthToSpace => {
            let e = b.conv(x, 4 * cout, 1, 1);
            b.depth_to_space(&e, 2)
        }
        Upsample::ResizeBilinear => {
            let r = b.resize_bilinear(x, 2);
            b.conv(&r, cout, 3, 1)
        }
    }
}

struct Ctx {
    b: GraphBuilder,
    act: OpKind,
}

impl Ctx {
    fn conv_act(&mut self, x: &str, cout: usize, k: usize, stride: usize) -> String {
        let c = self.b.conv(x, cout, k, stride);
        self.b.activation(&c, self.act)
    }
}

pub fn build(spec: &ArchSpec) -> Result<Graph, ZooError> {
    spec.check()?;
    let mut ctx = Ctx {
        b: GraphBuilder::new(spec.seed, spec.input.clone()),
        act: spec.activation.op(),
    };
    let x = spec.input.name.clone();
    let out = match spec.family {
        Family::Unet => unet(&mut ctx, spec, &x),
        Family::EdsrLike => edsr(&mut ctx, spec, &x),
        Family::RdnLike => rdn(&mut ctx, spec, &x),
        Family::DbpnLike => dbpn(&mut ctx, spec, &x),
        Family::FpnLike => fpn(&mut ctx, spec, &x),
        Family::SgnLike => sgn(&mut ctx, spec, &x),
    };
    let graph = ctx.b.finish(&[&out]);
    let violations = validate(&graph);
    if !violations.is_empty() {
        return Err(GraphError::Invalid(violations).into());
    }
    Ok(graph.resolved()?)
}

/// Encoder: head conv, then per level a stride-2 conv (levels >= 1) and two
/// 3x3 convs. Decoder: up-sample, activation, concat with the skip, two 3x3
/// convs. Tail: 3x3 conv and a 1x1 projection to RGB.
fn unet(ctx: &mut Ctx, spec: &ArchSpec, x: &str) -> String {
    let c0 = spec.base_channels;
    let rgb = spec.input.shape[3];
    let levels = spec.depth;
    let mut skips = Vec::new();
    ctx.b.set_scope("enc0");
    let mut h = ctx.conv_act(x, c0, 3, 1);
    for level in 0..levels {
        let c = c0 << level;
        ctx.b.set_scope(&format!("enc{level}"));
        if level > 0 {
            h = ctx.conv_act(&h, c, 3, 2);
        }
        h = ctx.conv_act(&h, c, 3, 1);
        h = ctx.conv_act(&h, c, 3, 1);
        skips.push(h.clone());
    }
    for level in (0..levels - 1).rev() {
        let c = c0 << level;
        ctx.b.set_scope(&format!("dec{level}"));
        let u = upsample(&mut ctx.b, &h, c, spec.upsample, 4);
        let u = ctx.b.activation(&u, ctx.act);
        let cat = ctx.b.concat(&[&u, &skips[level]]);
        h = ctx.conv_act(&cat, c, 3, 1);
        h = ctx.conv_act(&h, c, 3, 1);
    }
    ctx.b.set_scope("tail");
    h = ctx.conv_act(&h, c0, 3, 1);
    ctx.b.conv(&h, rgb, 1, 1)
}

/// Single-scale residual stack (no up-sampling tail).
fn edsr(ctx: &mut Ctx, spec: &ArchSpec, x: &str) -> String {
    let c = spec.base_channels;
    ctx.b.set_scope("head");
    let head = ctx.b.conv(x, c, 3, 1);
    let mut h = head.clone();
    for i in 0..spec.depth {
        ctx.b.set_scope(&format!("res{i}"));
        let a = ctx.conv_act(&h, c, 3, 1);
        let r = ctx.b.conv(&a, c, 3, 1);
        h = ctx.b.add(&h, &r);
    }
    ctx.b.set_scope("tail");
    let t = ctx.b.conv(&h, c, 3, 1);
    let g = ctx.b.add(&head, &t);
    ctx.b.conv(&g, spec.input.shape[3], 3, 1)
}

/// Residual dense blocks with 4 densely connected layers (growth = C/2),
/// local 1x1 fusion and a global concat fusion over all blocks.
fn rdn(ctx: &mut Ctx, spec: &ArchSpec, x: &str) -> String {
    let g0 = spec.base_channels;
    let growth = g0 / 2;
    const LAYERS: usize = 4;
    ctx.b.set_scope("sfe");
    let f1 = ctx.b.conv(x, g0, 3, 1);
    let mut h = ctx.b.conv(&f1, g0, 3, 1);
    let mut blocks = Vec::new();
    for i in 0..spec.depth {
        ctx.b.set_scope(&format!("rdb{i}"));
        let mut feats = vec![h.clone()];
        for _ in 0..LAYERS {
            let inp = if feats.len() == 1 {
                feats[0].clone()
            } else {
                let refs: Vec<&str> = feats.iter().map(|s| s.as_str()).collect();
                ctx.b.concat(&refs)
            };
            feats.push(ctx.conv_act(&inp, growth, 3, 1));
        }
        let refs: Vec<&str> = feats.iter().map(|s| s.as_str()).collect();
        let cat = ctx.b.concat(&refs);
        let fused = ctx.b.conv(&cat, g0, 1, 1);
        h = ctx.b.add(&h, &fused);
        blocks.push(h.clone());
    }
    ctx.b.set_scope("gff");
    let g = if blocks.len() == 1 {
        blocks[0].clone()
    } else {
        let refs: Vec<&str> = blocks.iter().map(|s| s.as_str()).collect();
        ctx.b.concat(&refs)
    };
    let g = ctx.b.conv(&g, g0, 1, 1);
    let g = ctx.b.conv(&g, g0, 3, 1);
    let g = ctx.b.add(&g, &f1);
    ctx.b.conv(&g, spec.input.shape[3], 3, 1)
}

/// Alternating down/up back-projection pairs on a full-resolution feature
/// map, starting with a down-projection. Projection kernels are 6x6 stride 2.
/// The error terms use ADD where the original subtracts.
fn dbpn(ctx: &mut Ctx, spec: &ArchSpec, x: &str) -> String {
    let c = spec.base_channels;
    ctx.b.set_scope("head");
    let mut h = ctx.conv_act(x, c, 3, 1);
    for i in 0..spec.depth {
        ctx.b.set_scope(&format!("down{i}"));
        let l0 = ctx.conv_act(&h, c, 6, 2);
        let h0 = upsample(&mut ctx.b, &l0, c, spec.upsample, 6);
        let h0 = ctx.b.activation(&h0, ctx.act);
        let e = ctx.b.add(&h0, &h);
        let l1 = ctx.conv_act(&e, c, 6, 2);
        let l = ctx.b.add(&l0, &l1);

        ctx.b.set_scope(&format!("up{i}"));
        let h0 = upsample(&mut ctx.b, &l, c, spec.upsample, 6);
        let h0 = ctx.b.activation(&h0, ctx.act);
        let l0 = ctx.conv_act(&h0, c, 6, 2);
        let e = ctx.b.add(&l0, &l);
        let h1 = upsample(&mut ctx.b, &e, c, spec.upsample, 6);
        let h1 = ctx.b.activation(&h1, ctx.act);
        h = ctx.b.add(&h0, &h1);
    }
    ctx.b.set_scope("tail");
    ctx.b.conv(&h, spec.input.shape[3], 3, 1)
}

/// Max-pooled backbone, 1x1 laterals, nearest-neighbour top-down merges,
/// per-level heads resized to full resolution and concatenated, a
/// multiplicative gate and a global residual.
fn fpn(ctx: &mut Ctx, spec: &ArchSpec, x: &str) -> String {
    let c = spec.base_channels;
    let levels = spec.depth;
    let f = c;
    let mut feats = Vec::new();
    ctx.b.set_scope("stem");
    let mut h = ctx.conv_act(x, c, 3, 1);
    let stem = h.clone();
    for level in 0..levels {
        let ch = c << level;
        ctx.b.set_scope(&format!("bb{level}"));
        if level > 0 {
            h = ctx.b.max_pool(&h, 2, 2);
        }
        h = ctx.conv_act(&h, ch, 3, 1);
        h = ctx.conv_act(&h, ch, 3, 1);
        feats.push(h.clone());
    }
    let mut p = Vec::new();
    ctx.b.set_scope(&format!("lat{}", levels - 1));
    let mut top = ctx.b.conv(&feats[levels - 1], f, 1, 1);
    p.push(top.clone());
    for level in (0..levels - 1).rev() {
        ctx.b.set_scope(&format!("lat{level}"));
        let lat = ctx.b.conv(&feats[level], f, 1, 1);
        let up = ctx.b.resize_nearest(&top, 2);
        top = ctx.b.add(&lat, &up);
        p.push(top.clone());
    }
    p.reverse();
    let mut heads = Vec::new();
    for (level, pl) in p.iter().enumerate() {
        ctx.b.set_scope(&format!("head{level}"));
        let hd = ctx.conv_act(pl, f / 2, 3, 1);
        let hd = ctx.conv_act(&hd, f / 2, 3, 1);
        heads.push(if level == 0 {
            hd
        } else {
            ctx.b.resize_nearest(&hd, 1 << level)
        });
    }
    ctx.b.set_scope("fuse");
    let refs: Vec<&str> = heads.iter().map(|s| s.as_str()).collect();
    let cat = ctx.b.concat(&refs);
    let s = ctx.conv_act(&cat, f, 3, 1);
    let gate = ctx.conv_act(&stem, f, 3, 1);
    let m = ctx.b.mul(&s, &gate);
    let s = ctx.conv_act(&m, f / 2, 3, 1);
    let o = ctx.b.conv(&s, spec.input.shape[3], 3, 1);
    ctx.b.add(&o, x)
}

/// Pixel-shuffle pyramid: the input is space-to-depth'd down `depth - 1`
/// times; processing starts at the coarsest level and each finer level adds
/// the up-sampled coarser features as guidance.
fn sgn(ctx: &mut Ctx, spec: &ArchSpec, x: &str) -> String {
    let c = spec.base_channels;
    let levels = spec.depth;
    let mut inputs = vec![x.to_string()];
    for level in 1..levels {
        ctx.b.set_scope(&format!("s2d{level}"));
        let prev = inputs[level - 1].clone();
        inputs.push(ctx.b.space_to_depth(&prev, 2));
    }
    let mut guide: Option<String> = None;
    for level in (0..levels).rev() {
        let ch = c << level.min(2);
        ctx.b.set_scope(&format!("lvl{level}"));
        let mut h = ctx.conv_act(&inputs[level], ch, 3, 1);
        if let Some(g) = &guide {
            let u = upsample(&mut ctx.b, g, ch, spec.upsample, 4);
            let u = ctx.b.activation(&u, ctx.act);
            let merged = ctx.b.add(&h, &u);
            h = ctx.conv_act(&merged, ch, 3, 1);
        }
        let blocks = if level == 0 { 3 } else { 2 };
        for _ in 0..blocks {
            let a = ctx.conv_act(&h, ch, 3, 1);
            let r = ctx.b.conv(&a, ch, 3, 1);
            h = ctx.b.add(&h, &r);
        }
        guide = Some(h);
    }
    ctx.b.set_scope("tail");
    let o = ctx.b.conv(guide.as_deref().expect("depth >= 2"), spec.input.shape[3], 3, 1);
    ctx.b.add(&o, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::complexity;
    use crate::graph::graph_hash;

    fn small(family: Family) -> ArchSpec {
        let mut s = ArchSpec::default_for(family).with_input_hw(32, 32);
        s.base_channels = 8;
        s.depth = s.depth.min(3);
        s
    }

    #[test]
    fn every_family_preserves_io_spec() {
        for f in Family::ALL {
            for up in Upsample::ALL {
                for act in Activation::ALL {
                    let spec = small(f).with_upsample(up).with_activation(act);
                    let g = build(&spec).unwrap();
                    assert!(validate(&g).is_empty());
                    let out = g.output_specs().unwrap();
                    assert_eq!(out.len(), 1);
                    assert_eq!(out[0].shape, spec.input.shape, "{f} {up:?} {act:?}");
                }
            }
        }
    }

    #[test]
    fn unet_small_example() {
        let mut spec = ArchSpec::default_for(Family::Unet).with_input_hw(64, 64);
        spec.depth = 2;
        spec.base_channels = 8;
        let g = build(&spec).unwrap();
        assert_eq!(g.output_specs().unwrap()[0].shape, [1, 64, 64, 3]);
        assert_eq!(g.count_kind(OpKind::Concatenation), 1);
        assert_eq!(g.count_kind(OpKind::TransposeConv2d), 1);
    }

    #[test]
    fn family_signatures() {
        let g = build(&small(Family::SgnLike)).unwrap();
        assert!(g.count_kind(OpKind::SpaceToDepth) > 0);
        assert!(g.count_kind(OpKind::DepthToSpace) > 0);
        let g = build(&small(Family::FpnLike)).unwrap();
        assert!(g.count_kind(OpKind::ResizeNearest) > 0);
        assert!(g.count_kind(OpKind::Mul) > 0);
        assert!(g.count_kind(OpKind::MaxPool2d) > 0);
        for f in [Family::EdsrLike, Family::RdnLike] {
            let g = build(&small(f)).unwrap();
            for k in [OpKind::TransposeConv2d, OpKind::DepthToSpace, OpKind::ResizeBilinear] {
                assert_eq!(g.count_kind(k), 0, "{f} has {k:?}");
            }
        }
        let g = build(&small(Family::DbpnLike)).unwrap();
        // First projection after the head conv is a down-projection.
        assert_eq!(g.nodes[2].kind, OpKind::Conv2d);
        assert_eq!(g.nodes[2].int_attr("stride"), Some(2));
        assert!(g.count_kind(OpKind::TransposeConv2d) > 0);
    }

    #[test]
    fn deterministic_given_seed() {
        let s = small(Family::Unet);
        assert_eq!(graph_hash(&build(&s).unwrap()), graph_hash(&build(&s).unwrap()));
        assert_ne!(
            graph_hash(&build(&s).unwrap()),
            graph_hash(&build(&s.clone().with_seed(1)).unwrap())
        );
    }

    #[test]
    fn invalid_specs() {
        let mut s = small(Family::Unet);
        s.depth = 1;
        assert!(matches!(build(&s), Err(ZooError::InvalidSpec(_))));
        let s = small(Family::Unet).with_input_hw(30, 32);
        assert!(matches!(build(&s), Err(ZooError::InvalidSpec(_))));
        let mut s = small(Family::EdsrLike);
        s.base_channels = 0;
        assert!(matches!(build(&s), Err(ZooError::InvalidSpec(_))));
        let mut s = small(Family::RdnLike);
        s.base_channels = 7;
        assert!(matches!(build(&s), Err(ZooError::InvalidSpec(_))));
    }

    #[test]
    fn unet_upsample_mac_ordering_small() {
        let base = ArchSpec::default_for(Family::Unet).with_input_hw(64, 64);
        let macs = |u| complexity(&build(&base.clone().with_upsample(u)).unwrap()).unwrap().total_macs;
        let (tc, d2s, bil) = (
            macs(Upsample::TransposeConv),
            macs(Upsample::DepthToSpace),
            macs(Upsample::ResizeBilinear),
        );
        assert!(d2s < tc && tc < bil);
    }

    #[test]
    fn mac_is_linear_in_pixels() {
        let base = ArchSpec::default_for(Family::Unet).with_input_hw(64, 64);
        let a = complexity(&build(&base).unwrap()).unwrap().total_macs;
        let b = complexity(&build(&base.clone().with_input_hw(128, 64)).unwrap()).unwrap().total_macs;
        assert_eq!(b, 2 * a);
    }

    #[test]
    fn defaults_hit_mac_budget() {
        for f in Family::ALL {
            let macs = complexity(&build(&ArchSpec::default_for(f)).unwrap()).unwrap().total_macs as f64;
            assert!((macs / 250e9 - 1.0).abs() <= 0.05, "{f}: {:.2} G", macs / 1e9);
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("unet".parse::<Family>().unwrap(), Family::Unet);
        assert_eq!("d2s".parse::<Upsample>().unwrap(), Upsample::DepthToSpace);
        assert_eq!("PRELU".parse::<Activation>().unwrap(), Activation::Prelu);
        assert!("gan".parse::<Family>().is_err());
    }
}
