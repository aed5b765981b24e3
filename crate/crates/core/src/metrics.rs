//! Image quality metrics: PSNR, SSIM and per-pixel L2.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::Shape;
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {a:?} vs {b:?}")]
    ShapeMismatch { a: Shape, b: Shape },
    #[error("image {height}x{width} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall { height: usize, width: usize, window: usize },
    #[error("peak must be positive, got {0}")]
    InvalidPeak(f64),
}

/// A decibel value. Infinite PSNR (identical inputs) serializes as `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Db(pub f64);

impl Db {
    pub const INFINITE: Db = Db(f64::INFINITY);

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Db {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{:.2}", self.0)
        }
    }
}

impl Serialize for Db {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() && self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Db {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Db(v)),
            Repr::Str(s) if s == "inf" => Ok(Db::INFINITE),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got `{s}`"))),
        }
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<(), MetricError> {
    if a.shape != b.shape {
        return Err(MetricError::ShapeMismatch { a: a.shape, b: b.shape });
    }
    Ok(())
}

/// Mean squared error per element.
pub fn l2_per_pixel(a: &Tensor, b: &Tensor) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> Db {
    if mse == 0.0 {
        Db::INFINITE
    } else {
        Db(10.0 * (peak * peak / mse).log10())
    }
}

pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<Db, MetricError> {
    if !(peak > 0.0) {
        return Err(MetricError::InvalidPeak(peak));
    }
    Ok(psnr_from_mse(l2_per_pixel(a, b)?, peak))
}

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / s).collect();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for y in &g {
        for x in &g {
            w.push(y * x);
        }
    }
    w
}

/// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5, dynamic
/// range 1.0), averaged over channels and batch.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    let [n, h, w, c] = a.shape;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(MetricError::ImageTooSmall {
            height: h,
            width: w,
            window: SSIM_WINDOW,
        });
    }
    let win = gaussian_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let (ho, wo) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for bi in 0..n {
        for ch in 0..c {
            let mut plane = 0.0;
            for oy in 0..ho {
                for ox in 0..wo {
                    let at = |t: &Tensor, dy: usize, dx: usize| t.at(bi, oy + dy, ox + dx, ch) as f64;
                    let (mut mx, mut my) = (0.0, 0.0);
                    for dy in 0..SSIM_WINDOW {
                        for dx in 0..SSIM_WINDOW {
                            let k = win[dy * SSIM_WINDOW + dx];
                            mx += k * at(a, dy, dx);
                            my += k * at(b, dy, dx);
                        }
                    }
                    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
                    for dy in 0..SSIM_WINDOW {
                        for dx in 0..SSIM_WINDOW {
                            let k = win[dy * SSIM_WINDOW + dx];
                            let (x, y) = (at(a, dy, dx) - mx, at(b, dy, dx) - my);
                            vx += k * x * x;
                            vy += k * y * y;
                            cov += k * x * y;
                        }
                    }
                    plane += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                }
            }
            total += plane / (ho * wo) as f64;
        }
    }
    Ok(total / (n * c) as f64)
}
