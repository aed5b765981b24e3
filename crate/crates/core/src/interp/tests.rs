use super::*;
use crate::graph::{DataType, GraphBuilder, TensorSpec, WeightTensor};

fn spec(shape: Shape) -> TensorSpec {
    TensorSpec::new("x", shape, DataType::F32)
}

fn single<F>(shape: Shape, build: F) -> Graph
where
    F: FnOnce(&mut GraphBuilder) -> String,
{
    let mut b = GraphBuilder::new(5, spec(shape));
    let y = build(&mut b);
    b.finish(&[&y]).resolved().unwrap()
}

fn run1(g: &Graph, x: &Tensor) -> Tensor {
    run(g, std::slice::from_ref(x), Precision::F32).unwrap().remove(0)
}

#[test]
fn one_by_one_conv_scales() {
    let mut g = single([1, 2, 2, 1], |b| b.conv("x", 1, 1, 1));
    let id = g.nodes[0].id.clone();
    g.weights.insert(format!("{id}/filter"), WeightTensor::filled(vec![1, 1, 1, 1], 2.0));
    g.weights.insert(format!("{id}/bias"), WeightTensor::filled(vec![1], 0.0));
    let y = run1(&g, &Tensor::filled([1, 2, 2, 1], 1.0));
    assert_eq!(y.data, vec![2.0; 4]);
}

/// Direct scalar convolution with explicit padding arithmetic.
fn conv_oracle(x: &Tensor, w: &WeightTensor, b: &[f32], stride: usize, same: bool) -> Tensor {
    let [n, h, wd, cin] = x.shape;
    let (cout, kh, kw) = (w.shape[0], w.shape[1], w.shape[2]);
    let (ho, wo, pt, pl) = if same {
        let ho = (h + stride - 1) / stride;
        let wo = (wd + stride - 1) / stride;
        let ph = ((ho - 1) * stride + kh).saturating_sub(h);
        let pw = ((wo - 1) * stride + kw).saturating_sub(wd);
        (ho, wo, ph / 2, pw / 2)
    } else {
        ((h - kh) / stride + 1, (wd - kw) / stride + 1, 0, 0)
    };
    let mut out = Tensor::zeros([n, ho, wo, cout]);
    for bi in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                for co in 0..cout {
                    let mut acc = b[co] as f64;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as i64 - pt as i64;
                            let ix = (ox * stride + kx) as i64 - pl as i64;
                            if iy < 0 || ix < 0 || iy >= h as i64 || ix >= wd as i64 {
                                continue;
                            }
                            for ci in 0..cin {
                                acc += x.at(bi, iy as usize, ix as usize, ci) as f64
                                    * w.data[((co * kh + ky) * kw + kx) * cin + ci] as f64;
                            }
                        }
                    }
                    let o = out.offset(bi, oy, ox, co);
                    out.data[o] = acc as f32;
                }
            }
        }
    }
    out
}

#[test]
fn conv_matches_scalar_oracle() {
    for (stride, same, k) in [(1, true, 3), (2, true, 3), (2, true, 4), (1, false, 3), (2, false, 5)] {
        let g = single([1, 9, 7, 3], |b| if same { b.conv("x", 5, k, stride) } else { b.conv_valid("x", 5, k, stride) });
        let node = &g.nodes[0];
        let w = &g.weights[&node.weights.as_ref().unwrap().filter];
        let bias = &g.weights[node.weights.as_ref().unwrap().bias.as_ref().unwrap()].data;
        let x = Tensor::random([1, 9, 7, 3], 3, -1.0, 1.0);
        let got = run1(&g, &x);
        let want = conv_oracle(&x, w, bias, stride, same);
        assert_eq!(got.shape, want.shape);
        for (a, b) in got.data.iter().zip(&want.data) {
            assert!((a - b).abs() < 1e-5, "stride {stride} same {same}: {a} vs {b}");
        }
    }
}

#[test]
fn transpose_conv_matches_scatter_oracle() {
    let g = single([1, 3, 4, 2], |b| b.transpose_conv("x", 3, 4, 2));
    let node = &g.nodes[0];
    let w = &g.weights[&node.weights.as_ref().unwrap().filter];
    let bias = &g.weights[node.weights.as_ref().unwrap().bias.as_ref().unwrap()].data;
    let x = Tensor::random([1, 3, 4, 2], 8, -1.0, 1.0);
    let got = run1(&g, &x);
    // Full scatter into (H-1)*s+K, then crop (K-s)/2 from the top/left.
    let (fh, fw) = (2 * 2 + 4, 3 * 2 + 4);
    let mut full = vec![0f64; fh * fw * 3];
    for iy in 0..3 {
        for ix in 0..4 {
            for ky in 0..4 {
                for kx in 0..4 {
                    for co in 0..3 {
                        for ci in 0..2 {
                            full[((iy * 2 + ky) * fw + ix * 2 + kx) * 3 + co] +=
                                x.at(0, iy, ix, ci) as f64 * w.data[((co * 4 + ky) * 4 + kx) * 2 + ci] as f64;
                        }
                    }
                }
            }
        }
    }
    assert_eq!(got.shape, [1, 6, 8, 3]);
    for oy in 0..6 {
        for ox in 0..8 {
            for co in 0..3 {
                let want = full[((oy + 1) * fw + ox + 1) * 3 + co] + bias[co] as f64;
                assert!((got.at(0, oy, ox, co) as f64 - want).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn depth_to_space_index_map() {
    let x = Tensor::new([1, 4, 4, 4], (0..64).map(|v| v as f32).collect());
    let g = single([1, 4, 4, 4], |b| b.depth_to_space("x", 2));
    let y = run1(&g, &x);
    assert_eq!(y.shape, [1, 8, 8, 1]);
    for oy in 0..8 {
        for ox in 0..8 {
            let src_c = (oy % 2) * 2 + (ox % 2);
            assert_eq!(y.at(0, oy, ox, 0), x.at(0, oy / 2, ox / 2, src_c));
        }
    }
}

#[test]
fn space_to_depth_inverts_depth_to_space() {
    let x = Tensor::random([1, 4, 6, 8], 1, -1.0, 1.0);
    let g = single([1, 4, 6, 8], |b| {
        let d = b.depth_to_space("x", 2);
        b.space_to_depth(&d, 2)
    });
    assert_eq!(run1(&g, &x), x);
}

#[test]
fn bilinear_constant_and_identity() {
    let c = Tensor::filled([1, 5, 3, 2], 0.3721);
    let g = single([1, 5, 3, 2], |b| b.resize_bilinear("x", 2));
    let y = run1(&g, &c);
    assert!(y.data.iter().all(|&v| v == 0.3721));

    let x = Tensor::random([1, 5, 3, 2], 4, -1.0, 1.0);
    let g = single([1, 5, 3, 2], |b| b.resize_bilinear("x", 1));
    assert_eq!(run1(&g, &x), x);
}

#[test]
fn bilinear_half_pixel_values() {
    // 1-D ramp [0, 1] upscaled by 2 with half-pixel centers: 0, .25, .75, 1.
    let x = Tensor::new([1, 1, 2, 1], vec![0.0, 1.0]);
    let g = single([1, 1, 2, 1], |b| b.resize_bilinear("x", 2));
    let y = run1(&g, &x);
    assert_eq!(y.shape, [1, 2, 4, 1]);
    assert_eq!(&y.data[..4], &[0.0, 0.25, 0.75, 1.0]);
}

#[test]
fn concat_then_slice_recovers_inputs() {
    let mut b = GraphBuilder::new(1, spec([1, 3, 3, 2]));
    let a = b.conv("x", 3, 1, 1);
    let cat = b.concat(&["x", &a]);
    let g = b.finish(&[&cat, &a]).resolved().unwrap();
    let x = Tensor::random([1, 3, 3, 2], 2, -1.0, 1.0);
    let outs = run(&g, std::slice::from_ref(&x), Precision::F32).unwrap();
    let (cat, a) = (&outs[0], &outs[1]);
    for px in 0..9 {
        assert_eq!(&cat.data[px * 5..px * 5 + 2], &x.data[px * 2..px * 2 + 2]);
        assert_eq!(&cat.data[px * 5 + 2..px * 5 + 5], &a.data[px * 3..px * 3 + 3]);
    }
}

#[test]
fn prelu_pointwise() {
    let g = single([1, 1, 2, 2], |b| b.prelu("x"));
    let x = Tensor::new([1, 1, 2, 2], vec![1.5, -2.0, 0.0, -0.4]);
    let y = run1(&g, &x);
    assert_eq!(y.data, vec![1.5, -0.5, 0.0, -0.1]);
}

#[test]
fn pooling() {
    let x = Tensor::new([1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]);
    let g = single([1, 2, 2, 1], |b| b.max_pool("x", 2, 2));
    assert_eq!(run1(&g, &x).data, vec![4.0]);
    let g = single([1, 2, 2, 1], |b| b.avg_pool("x", 2, 2));
    assert_eq!(run1(&g, &x).data, vec![2.5]);
    // SAME 3x3 average at a corner divides by in-bounds taps only.
    let g = single([1, 2, 2, 1], |b| b.avg_pool("x", 3, 1));
    assert_eq!(run1(&g, &x).data, vec![2.5; 4]);
}

#[test]
fn fully_connected_counts() {
    let g = single([1, 2, 2, 3], |b| b.fully_connected("x", 12, 5));
    let x = Tensor::random([1, 2, 2, 3], 2, -1.0, 1.0);
    assert_eq!(count_multiplies(&g, &[x.clone()]).unwrap(), 60);
    assert_eq!(run1(&g, &x).shape, [1, 1, 1, 5]);
}

#[test]
fn multiply_counts_match_closed_form() {
    let g = single([1, 8, 8, 4], |b| b.conv("x", 8, 3, 1));
    assert_eq!(count_multiplies(&g, &[Tensor::zeros([1, 8, 8, 4])]).unwrap(), 18_432);
    let g = single([1, 4, 4, 8], |b| b.transpose_conv("x", 4, 2, 2));
    assert_eq!(count_multiplies(&g, &[Tensor::zeros([1, 4, 4, 8])]).unwrap(), 2_048);
    let g = single([1, 4, 4, 8], |b| b.depth_to_space("x", 2));
    assert_eq!(count_multiplies(&g, &[Tensor::zeros([1, 4, 4, 8])]).unwrap(), 0);
}

#[test]
fn deterministic_bits() {
    let g = single([1, 8, 8, 3], |b| {
        let a = b.conv("x", 8, 3, 2);
        let a = b.prelu(&a);
        let u = b.transpose_conv(&a, 3, 4, 2);
        b.add("x", &u)
    });
    let x = Tensor::random([1, 8, 8, 3], 77, 0.0, 1.0);
    let a = run1(&g, &x);
    let b = run1(&g, &x);
    assert_eq!(
        a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn f16_rounds_each_node() {
    let g = single([1, 4, 4, 3], |b| b.conv("x", 4, 3, 1));
    let x = Tensor::random([1, 4, 4, 3], 1, 0.0, 1.0);
    let y = run(&g, &[x], Precision::EmulatedF16).unwrap().remove(0);
    for v in &y.data {
        assert_eq!(half::f16::from_f32(*v).to_f32(), *v);
    }
}

#[test]
fn input_errors() {
    let g = single([1, 4, 4, 3], |b| b.relu("x"));
    assert!(matches!(
        run(&g, &[Tensor::zeros([1, 4, 5, 3])], Precision::F32),
        Err(InterpError::ShapeMismatch { .. })
    ));
    assert!(matches!(run(&g, &[], Precision::F32), Err(InterpError::InputCount { .. })));
    assert!(matches!(
        run(&g, &[Tensor::zeros([1, 4, 4, 3])], Precision::Quant),
        Err(InterpError::NotQuantized)
    ));
    let mut g = single([1, 4, 4, 3], |b| b.conv("x", 2, 1, 1));
    g.weights.clear();
    assert!(run(&g, &[Tensor::zeros([1, 4, 4, 3])], Precision::F32).is_err());
}
