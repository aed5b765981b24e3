//! Naive float kernels, NHWC.
//!
//! Every kernel is a direct nested loop; convolution counts one multiply per
//! (output pixel, kernel tap, input channel, output channel), padding taps
//! included, which is exactly the MAC convention of the complexity module.

use crate::graph::{Padding, Shape};
use crate::tensor::{numel, Tensor};

/// Amount of padding before the first row/column. SAME pads ceil-div style with
/// the odd pixel going to the bottom/right.
pub(crate) fn same_pad_before(input: usize, output: usize, k: usize, stride: usize) -> usize {
    let needed = ((output - 1) * stride + k).saturating_sub(input);
    needed / 2
}

/// OHWI filter to HWIO so the innermost loop runs over output channels.
pub(crate) fn to_hwio<T: Copy + Default>(filter: &[T], cout: usize, kh: usize, kw: usize, cin: usize) -> Vec<T> {
    let mut out = vec![T::default(); filter.len()];
    for o in 0..cout {
        for y in 0..kh {
            for x in 0..kw {
                for i in 0..cin {
                    out[((y * kw + x) * cin + i) * cout + o] = filter[((o * kh + y) * kw + x) * cin + i];
                }
            }
        }
    }
    out
}

pub(crate) struct ConvGeom {
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub out_shape: Shape,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    pub fn conv(in_shape: Shape, cout: usize, kh: usize, kw: usize, stride: usize, padding: Padding) -> Self {
        let [n, h, w, _] = in_shape;
        let (ho, wo, pt, pl) = match padding {
            Padding::Same => {
                let ho = h.div_ceil(stride);
                let wo = w.div_ceil(stride);
                (ho, wo, same_pad_before(h, ho, kh, stride), same_pad_before(w, wo, kw, stride))
            }
            Padding::Valid => ((h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0),
        };
        Self {
            kh,
            kw,
            stride,
            out_shape: [n, ho, wo, cout],
            pad_top: pt,
            pad_left: pl,
        }
    }

    /// Output is exactly stride x input; the full scatter extent is cropped
    /// symmetrically with the odd row going to the bottom/right.
    pub fn transpose(in_shape: Shape, cout: usize, kh: usize, kw: usize, stride: usize) -> Self {
        let [n, h, w, _] = in_shape;
        Self {
            kh,
            kw,
            stride,
            out_shape: [n, stride * h, stride * w, cout],
            pad_top: kh.saturating_sub(stride) / 2,
            pad_left: kw.saturating_sub(stride) / 2,
        }
    }
}

pub(crate) fn conv2d(input: &Tensor, hwio: &[f32], bias: Option<&[f32]>, g: &ConvGeom, muls: &mut u64) -> Tensor {
    let [n, h, w, cin] = input.shape;
    let [_, ho, wo, cout] = g.out_shape;
    let mut out = vec![0f32; numel(&g.out_shape)];
    let mut acc = vec![0f32; cout];
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                match bias {
                    Some(bv) => acc.copy_from_slice(bv),
                    None => acc.iter_mut().for_each(|a| *a = 0.0),
                }
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                    for kx in 0..g.kw {
                        *muls += (cin * cout) as u64;
                        let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        let base = ((b * h + iy as usize) * w + ix as usize) * cin;
                        let px = &input.data[base..base + cin];
                        let wbase = (ky * g.kw + kx) * cin * cout;
                        for (ci, &x) in px.iter().enumerate() {
                            let row = &hwio[wbase + ci * cout..wbase + (ci + 1) * cout];
                            for (a, &wv) in acc.iter_mut().zip(row) {
                                *a += x * wv;
                            }
                        }
                    }
                }
                let obase = ((b * ho + oy) * wo + ox) * cout;
                out[obase..obase + cout].copy_from_slice(&acc);
            }
        }
    }
    Tensor::new(g.out_shape, out)
}

pub(crate) fn transpose_conv2d(
    input: &Tensor,
    hwio: &[f32],
    bias: Option<&[f32]>,
    g: &ConvGeom,
    muls: &mut u64,
) -> Tensor {
    let [n, h, w, cin] = input.shape;
    let [_, ho, wo, cout] = g.out_shape;
    let mut out = vec![0f32; numel(&g.out_shape)];
    for b in 0..n {
        for iy in 0..h {
            for ix in 0..w {
                let base = ((b * h + iy) * w + ix) * cin;
                for ky in 0..g.kh {
                    let oy = (iy * g.stride + ky) as isize - g.pad_top as isize;
                    for kx in 0..g.kw {
                        *muls += (cin * cout) as u64;
                        let ox = (ix * g.stride + kx) as isize - g.pad_left as isize;
                        if oy < 0 || ox < 0 || oy >= ho as isize || ox >= wo as isize {
                            continue;
                        }
                        let obase = ((b * ho + oy as usize) * wo + ox as usize) * cout;
                        let wbase = (ky * g.kw + kx) * cin * cout;
                        for ci in 0..cin {
                            let x = input.data[base + ci];
                            let row = &hwio[wbase + ci * cout..wbase + (ci + 1) * cout];
                            for (o, &wv) in out[obase..obase + cout].iter_mut().zip(row) {
                                *o += x * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(bv) = bias {
        for px in out.chunks_exact_mut(cout) {
            for (o, &bb) in px.iter_mut().zip(bv) {
                *o += bb;
            }
        }
    }
    Tensor::new(g.out_shape, out)
}

pub(crate) fn fully_connected(input: &Tensor, filter: &[f32], bias: Option<&[f32]>, out_features: usize, muls: &mut u64) -> Tensor {
    let n = input.shape[0];
    let inf = input.len() / n;
    let mut out = vec![0f32; n * out_features];
    for b in 0..n {
        let x = &input.data[b * inf..(b + 1) * inf];
        for o in 0..out_features {
            let row = &filter[o * inf..(o + 1) * inf];
            let mut acc = bias.map_or(0.0, |bv| bv[o]);
            for (a, w) in x.iter().zip(row) {
                acc += a * w;
            }
            *muls += inf as u64;
            out[b * out_features + o] = acc;
        }
    }
    Tensor::new([n, 1, 1, out_features], out)
}

pub(crate) fn depth_to_space(input: &Tensor, block: usize) -> Tensor {
    let [n, h, w, c] = input.shape;
    let co = c / (block * block);
    let shape = [n, h * block, w * block, co];
    let mut out = vec![0f32; numel(&shape)];
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                for i in 0..block {
                    for j in 0..block {
                        let src = ((b * h + y) * w + x) * c + (i * block + j) * co;
                        let dst = ((b * h * block + y * block + i) * w * block + x * block + j) * co;
                        out[dst..dst + co].copy_from_slice(&input.data[src..src + co]);
                    }
                }
            }
        }
    }
    Tensor::new(shape, out)
}

pub(crate) fn space_to_depth(input: &Tensor, block: usize) -> Tensor {
    let [n, h, w, c] = input.shape;
    let (ho, wo) = (h / block, w / block);
    let shape = [n, ho, wo, c * block * block];
    let mut out = vec![0f32; numel(&shape)];
    for b in 0..n {
        for y in 0..ho {
            for x in 0..wo {
                for i in 0..block {
                    for j in 0..block {
                        let src = ((b * h + y * block + i) * w + x * block + j) * c;
                        let dst = ((b * ho + y) * wo + x) * c * block * block + (i * block + j) * c;
                        out[dst..dst + c].copy_from_slice(&input.data[src..src + c]);
                    }
                }
            }
        }
    }
    Tensor::new(shape, out)
}

/// Half-pixel centers, no corner alignment, edge clamp.
pub(crate) fn resize_bilinear(input: &Tensor, scale: usize) -> Tensor {
    let [n, h, w, c] = input.shape;
    let shape = [n, h * scale, w * scale, c];
    let taps = |dst: usize, len: usize| -> (usize, usize, f32) {
        let src = ((dst as f64 + 0.5) / scale as f64 - 0.5).max(0.0);
        let lo = (src.floor() as usize).min(len - 1);
        let hi = (lo + 1).min(len - 1);
        (lo, hi, (src - lo as f64) as f32)
    };
    let mut out = vec![0f32; numel(&shape)];
    let mut o = 0;
    for b in 0..n {
        for oy in 0..h * scale {
            let (y0, y1, fy) = taps(oy, h);
            for ox in 0..w * scale {
                let (x0, x1, fx) = taps(ox, w);
                for ch in 0..c {
                    let a = input.at(b, y0, x0, ch);
                    let bb = input.at(b, y0, x1, ch);
                    let cc = input.at(b, y1, x0, ch);
                    let d = input.at(b, y1, x1, ch);
                    let top = a + (bb - a) * fx;
                    let bottom = cc + (d - cc) * fx;
                    out[o] = top + (bottom - top) * fy;
                    o += 1;
                }
            }
        }
    }
    Tensor::new(shape, out)
}

pub(crate) fn resize_nearest(input: &Tensor, scale: usize) -> Tensor {
    let [n, h, w, c] = input.shape;
    let shape = [n, h * scale, w * scale, c];
    let mut out = Vec::with_capacity(numel(&shape));
    for b in 0..n {
        for oy in 0..h * scale {
            for ox in 0..w * scale {
                let base = input.offset(b, oy / scale, ox / scale, 0);
                out.extend_from_slice(&input.data[base..base + c]);
            }
        }
    }
    Tensor::new(shape, out)
}

pub(crate) fn concat(inputs: &[&Tensor]) -> Tensor {
    let [n, h, w, _] = inputs[0].shape;
    let total: usize = inputs.iter().map(|t| t.shape[3]).sum();
    let mut out = Vec::with_capacity(n * h * w * total);
    for px in 0..n * h * w {
        for t in inputs {
            let c = t.shape[3];
            out.extend_from_slice(&t.data[px * c..(px + 1) * c]);
        }
    }
    Tensor::new([n, h, w, total], out)
}

pub(crate) fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    Tensor::new(a.shape, a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect())
}

pub(crate) fn relu(x: &Tensor) -> Tensor {
    Tensor::new(x.shape, x.data.iter().map(|&v| v.max(0.0)).collect())
}

pub(crate) fn prelu(x: &Tensor, slope: &[f32]) -> Tensor {
    let c = x.shape[3];
    let data = x
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| if v >= 0.0 { v } else { slope[i % c] * v })
        .collect();
    Tensor::new(x.shape, data)
}

/// Pooling over the in-bounds taps only (padding never wins a max and is
/// excluded from the average's divisor).
pub(crate) fn pool(x: &Tensor, kh: usize, kw: usize, stride: usize, padding: Padding, max: bool) -> Tensor {
    let g = ConvGeom::conv(x.shape, x.shape[3], kh, kw, stride, padding);
    let [n, h, w, c] = x.shape;
    let [_, ho, wo, _] = g.out_shape;
    let mut out = Vec::with_capacity(numel(&g.out_shape));
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                for ch in 0..c {
                    let mut acc = if max { f32::NEG_INFINITY } else { 0.0 };
                    let mut count = 0;
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - g.pad_top as isize;
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - g.pad_left as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let v = x.at(b, iy as usize, ix as usize, ch);
                            acc = if max { acc.max(v) } else { acc + v };
                            count += 1;
                        }
                    }
                    out.push(if max { acc } else { acc / count as f32 });
                }
            }
        }
    }
    Tensor::new(g.out_shape, out)
}
