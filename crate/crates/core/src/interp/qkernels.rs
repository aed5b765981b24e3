//! Fixed-point convolution kernels.
//!
//! Operands are zero-point-shifted integers; products accumulate in `A`
//! (i32 for 8-bit, i64 for 16-bit) and the sum is requantized once per
//! output element.

use std::ops::{AddAssign, Mul};

use super::kernels::ConvGeom;
use crate::quant::QuantScheme;
use crate::tensor::numel;

pub(crate) trait Accumulator: Copy + Default + AddAssign + Mul<Output = Self> + Send + Sync {
    fn from_i32(v: i32) -> Self;
    /// Callers keep values within the accumulator's range.
    fn from_i64(v: i64) -> Self;
    fn to_f64(self) -> f64;
}

impl Accumulator for i32 {
    fn from_i32(v: i32) -> Self {
        v
    }
    fn from_i64(v: i64) -> Self {
        v as i32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Accumulator for i64 {
    fn from_i32(v: i32) -> Self {
        v as i64
    }
    fn from_i64(v: i64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Quantized tensor: raw integer codes plus their scheme.
#[derive(Clone, Debug)]
pub(crate) struct QTensor {
    pub shape: crate::graph::Shape,
    pub data: Vec<i32>,
    pub scheme: QuantScheme,
}

impl QTensor {
    /// Codes minus zero-point.
    pub fn centered<A: Accumulator>(&self) -> Vec<A> {
        self.data
            .iter()
            .map(|&q| A::from_i32(q - self.scheme.zero_point))
            .collect()
    }
}

pub(crate) struct QConv<'a, A> {
    pub hwio: &'a [A],
    pub bias: Option<&'a [i64]>,
    pub multiplier: f64,
    pub out: QuantScheme,
}

fn requantize<A: Accumulator>(acc: A, multiplier: f64, out: &QuantScheme) -> i32 {
    out.clamp(out.zero_point as i64 + crate::quant::round_half_even(acc.to_f64() * multiplier))
}

pub(crate) fn conv2d<A: Accumulator>(input: &QTensor, k: &QConv<'_, A>, g: &ConvGeom, muls: &mut u64) -> QTensor {
    let [n, h, w, cin] = input.shape;
    let [_, ho, wo, cout] = g.out_shape;
    let x = input.centered::<A>();
    let mut out = vec![0i32; numel(&g.out_shape)];
    let mut acc = vec![A::default(); cout];
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                for (o, a) in acc.iter_mut().enumerate() {
                    *a = k.bias.map_or(A::default(), |bv| A::from_i64(bv[o]));
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
                        let wbase = (ky * g.kw + kx) * cin * cout;
                        for ci in 0..cin {
                            let xv = x[base + ci];
                            let row = &k.hwio[wbase + ci * cout..wbase + (ci + 1) * cout];
                            for (a, &wv) in acc.iter_mut().zip(row) {
                                *a += xv * wv;
                            }
                        }
                    }
                }
                let obase = ((b * ho + oy) * wo + ox) * cout;
                for (o, a) in acc.iter().enumerate() {
                    out[obase + o] = requantize(*a, k.multiplier, &k.out);
                }
            }
        }
    }
    QTensor {
        shape: g.out_shape,
        data: out,
        scheme: k.out,
    }
}

pub(crate) fn transpose_conv2d<A: Accumulator>(input: &QTensor, k: &QConv<'_, A>, g: &ConvGeom, muls: &mut u64) -> QTensor {
    let [n, h, w, cin] = input.shape;
    let [_, ho, wo, cout] = g.out_shape;
    let x = input.centered::<A>();
    let mut acc = vec![A::default(); numel(&g.out_shape)];
    if let Some(bv) = k.bias {
        for px in acc.chunks_exact_mut(cout) {
            for (a, &bb) in px.iter_mut().zip(bv) {
                *a = A::from_i64(bb);
            }
        }
    }
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
                            let xv = x[base + ci];
                            let row = &k.hwio[wbase + ci * cout..wbase + (ci + 1) * cout];
                            for (a, &wv) in acc[obase..obase + cout].iter_mut().zip(row) {
                                *a += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    QTensor {
        shape: g.out_shape,
        data: acc.iter().map(|&a| requantize(a, k.multiplier, &k.out)).collect(),
        scheme: k.out,
    }
}

pub(crate) fn fully_connected<A: Accumulator>(input: &QTensor, k: &QConv<'_, A>, out_features: usize, muls: &mut u64) -> QTensor {
    let n = input.shape[0];
    let inf = input.data.len() / n;
    let x = input.centered::<A>();
    let mut out = vec![0i32; n * out_features];
    for b in 0..n {
        for o in 0..out_features {
            let mut acc = k.bias.map_or(A::default(), |bv| A::from_i64(bv[o]));
            for i in 0..inf {
                acc += x[b * inf + i] * k.hwio[o * inf + i];
            }
            *muls += inf as u64;
            out[b * out_features + o] = requantize(acc, k.multiplier, &k.out);
        }
    }
    QTensor {
        shape: [n, 1, 1, out_features],
        data: out,
        scheme: k.out,
    }
}
