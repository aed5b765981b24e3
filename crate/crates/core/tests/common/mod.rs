//! Seeded random graph generator shared by the integration tests.
#![allow(dead_code)]

use portanet::graph::validate;
use portanet::rng::SplitMix64;
use portanet::{DataType, Graph, GraphBuilder, TensorSpec, Tensor};

#[derive(Clone, Debug)]
struct Live {
    name: String,
    h: usize,
    w: usize,
    c: usize,
}

pub struct RandomGraph {
    pub graph: Graph,
    pub input: Tensor,
}

fn pick<'a>(rng: &mut SplitMix64, xs: &'a [Live]) -> &'a Live {
    &xs[rng.below(xs.len() as u64) as usize]
}

/// At most `max_nodes` operators over an input of at most 16x16. With
/// `with_tc`, at least one stride-2 TRANSPOSE_CONV_2D is present and every
/// transpose conv uses stride 2.
pub fn random_graph(seed: u64, max_nodes: usize, with_tc: bool) -> RandomGraph {
    let mut rng = SplitMix64::new(seed);
    let h = 2 * (1 + rng.below(8) as usize);
    let w = 2 * (1 + rng.below(8) as usize);
    let c = 1 + rng.below(4) as usize;
    let mut b = GraphBuilder::new(seed, TensorSpec::new("x", [1, h, w, c], DataType::F32));
    let mut live = vec![Live { name: "x".into(), h, w, c }];
    let mut consumed = std::collections::BTreeSet::new();
    let n_nodes = 1 + rng.below(max_nodes as u64) as usize;
    let tc_at = rng.below(n_nodes as u64) as usize;
    let mut has_fc = false;

    for step in 0..n_nodes {
        let x = pick(&mut rng, &live).clone();
        let forced = with_tc && step == tc_at;
        let op = if forced { 1 } else { rng.below(13) };
        let made = match op {
            0 => {
                let k = [1, 3][rng.below(2) as usize];
                let s = 1 + rng.below(2) as usize;
                let cout = 1 + rng.below(8) as usize;
                let valid = rng.below(3) == 0 && x.h >= k && x.w >= k;
                let name = if valid { b.conv_valid(&x.name, cout, k, s) } else { b.conv(&x.name, cout, k, s) };
                let (ho, wo) = if valid {
                    ((x.h - k) / s + 1, (x.w - k) / s + 1)
                } else {
                    (x.h.div_ceil(s), x.w.div_ceil(s))
                };
                Some(Live { name, h: ho, w: wo, c: cout })
            }
            1 if forced || (x.h * 2 <= 32 && x.w * 2 <= 32) => {
                let k = 2 + rng.below(3) as usize;
                let s = if with_tc { 2 } else { 1 + rng.below(2) as usize };
                let cout = 1 + rng.below(8) as usize;
                Some(Live { name: b.transpose_conv(&x.name, cout, k, s), h: s * x.h, w: s * x.w, c: cout })
            }
            2 if x.c % 4 == 0 => Some(Live { name: b.depth_to_space(&x.name, 2), h: 2 * x.h, w: 2 * x.w, c: x.c / 4 }),
            3 if x.h % 2 == 0 && x.w % 2 == 0 && x.c <= 8 => {
                Some(Live { name: b.space_to_depth(&x.name, 2), h: x.h / 2, w: x.w / 2, c: x.c * 4 })
            }
            4 if x.h * 2 <= 32 && x.w * 2 <= 32 => {
                let name = if rng.below(2) == 0 { b.resize_bilinear(&x.name, 2) } else { b.resize_nearest(&x.name, 2) };
                Some(Live { name, h: 2 * x.h, w: 2 * x.w, c: x.c })
            }
            5 => {
                let same: Vec<Live> = live.iter().filter(|l| (l.h, l.w) == (x.h, x.w)).cloned().collect();
                let y = pick(&mut rng, &same).clone();
                consumed.insert(y.name.clone());
                Some(Live { name: b.concat(&[&x.name, &y.name]), h: x.h, w: x.w, c: x.c + y.c })
            }
            6 | 7 => {
                let same: Vec<Live> = live.iter().filter(|l| (l.h, l.w, l.c) == (x.h, x.w, x.c)).cloned().collect();
                let y = pick(&mut rng, &same).clone();
                let name = if op == 6 { b.add(&x.name, &y.name) } else { b.mul(&x.name, &y.name) };
                consumed.insert(y.name.clone());
                Some(Live { name, ..x.clone() })
            }
            8 => Some(Live { name: b.relu(&x.name), ..x.clone() }),
            9 => Some(Live { name: b.prelu(&x.name), ..x.clone() }),
            10 | 11 => {
                let (k, s) = if rng.below(2) == 0 { (2, 2) } else { (3, 1) };
                let name = if op == 10 { b.max_pool(&x.name, k, s) } else { b.avg_pool(&x.name, k, s) };
                Some(Live { name, h: x.h.div_ceil(s), w: x.w.div_ceil(s), c: x.c })
            }
            12 if !has_fc && !with_tc => {
                has_fc = true;
                let out = 1 + rng.below(8) as usize;
                Some(Live { name: b.fully_connected(&x.name, x.h * x.w * x.c, out), h: 1, w: 1, c: out })
            }
            _ => None,
        };
        let made = made.unwrap_or_else(|| Live { name: b.relu(&x.name), ..x.clone() });
        consumed.insert(x.name.clone());
        live.push(made);
    }

    let outputs: Vec<String> = live
        .iter()
        .skip(1)
        .filter(|l| !consumed.contains(&l.name))
        .map(|l| l.name.clone())
        .collect();
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    let graph = b.finish(&refs).resolved().expect("generator builds consistent shapes");
    let violations = validate(&graph);
    assert!(violations.is_empty(), "seed {seed}: {violations:?}");
    let input = Tensor::random([1, h, w, c], seed ^ 0x5eed, -1.0, 1.0);
    RandomGraph { graph, input }
}
