use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::QuantError;

/// Round to nearest, ties to even, saturating into i64.
#[inline]
pub fn round_half_even(x: f64) -> i64 {
    x.round_ties_even() as i64
}

/// Width added to degenerate `[c, c]` ranges so the scale stays positive.
pub const DEGENERATE_WIDTH: f32 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuantMode {
    #[serde(rename = "PTQ")]
    Ptq,
    #[serde(rename = "FAKE_QUANT")]
    FakeQuant,
}

/// Per-tensor affine quantization parameters.
///
/// 8-bit is asymmetric unsigned (`[0, 255]` with a zero-point), 16-bit is
/// symmetric signed with `zero_point == 0` and `scale = max|x| / 32767`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantScheme {
    pub bits: u8,
    pub scale: f64,
    pub zero_point: i32,
    pub mode: QuantMode,
}

impl QuantScheme {
    /// Scheme covering the calibrated `[min, max]`.
    ///
    /// For 8-bit the range is first extended to contain zero so that zero
    /// (padding, RELU floor) is exactly representable.
    pub fn from_range(bits: u8, min: f32, max: f32, mode: QuantMode) -> Result<Self, QuantError> {
        if !min.is_finite() || !max.is_finite() || min > max {
            return Err(QuantError::InvalidRange { min, max });
        }
        let (min, max) = if min == max {
            (min as f64, (min + DEGENERATE_WIDTH) as f64)
        } else {
            (min as f64, max as f64)
        };
        match bits {
            8 => {
                let lo = min.min(0.0);
                let hi = max.max(0.0);
                let scale = (hi - lo) / 255.0;
                let zero_point = round_half_even(-lo / scale).clamp(0, 255) as i32;
                Ok(Self {
                    bits,
                    scale,
                    zero_point,
                    mode,
                })
            }
            16 => {
                let m = min.abs().max(max.abs());
                Ok(Self {
                    bits,
                    scale: m / 32767.0,
                    zero_point: 0,
                    mode,
                })
            }
            b => Err(QuantError::UnsupportedBits(b)),
        }
    }

    pub fn qmin(&self) -> i32 {
        if self.bits == 8 {
            0
        } else {
            -32768
        }
    }

    pub fn qmax(&self) -> i32 {
        if self.bits == 8 {
            255
        } else {
            32767
        }
    }

    #[inline]
    pub fn clamp(&self, q: i64) -> i32 {
        q.clamp(self.qmin() as i64, self.qmax() as i64) as i32
    }

    /// Saturating quantization.
    #[inline]
    pub fn quantize(&self, x: f64) -> i32 {
        self.clamp(round_half_even(x / self.scale) + self.zero_point as i64)
    }

    #[inline]
    pub fn dequantize(&self, q: i32) -> f64 {
        (q - self.zero_point) as f64 * self.scale
    }

    /// quantize then dequantize
    #[inline]
    pub fn fake(&self, x: f32) -> f32 {
        self.dequantize(self.quantize(x as f64)) as f32
    }

    /// Smallest and largest representable real values.
    pub fn representable(&self) -> (f64, f64) {
        (self.dequantize(self.qmin()), self.dequantize(self.qmax()))
    }
}

/// Integer weight payload: filter codes, or bias codes (int32 range for
/// 8-bit graphs, int64 for 16-bit ones).
#[derive(Clone, Debug, PartialEq)]
pub struct IntTensor {
    pub shape: Vec<usize>,
    pub data: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct IntTensorFile {
    shape: Vec<usize>,
    data: String,
}

impl Serialize for IntTensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        IntTensorFile {
            shape: self.shape.clone(),
            data: crate::graph::io_helpers::encode_i64(&self.data),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for IntTensor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let f = IntTensorFile::deserialize(d)?;
        let data = crate::graph::io_helpers::decode_i64(&f.data).map_err(serde::de::Error::custom)?;
        if data.len() != f.shape.iter().product::<usize>() {
            return Err(serde::de::Error::custom(format!(
                "{} integer values for shape {:?}",
                data.len(),
                f.shape
            )));
        }
        Ok(IntTensor { shape: f.shape, data })
    }
}

/// Quantization section of a graph: one scheme per activation tensor and
/// per quantized weight, plus the integer weight payloads. Float weights stay
/// in the graph's weight store for error reporting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantInfo {
    pub bits: u8,
    pub mode: QuantMode,
    pub schemes: BTreeMap<String, QuantScheme>,
    pub qweights: BTreeMap<String, IntTensor>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_range_8bit() {
        let s = QuantScheme::from_range(8, 0.0, 1.0, QuantMode::Ptq).unwrap();
        assert_eq!(s.scale, 1.0 / 255.0);
        assert_eq!(s.zero_point, 0);
    }

    #[test]
    fn symmetric_16bit() {
        let s = QuantScheme::from_range(16, -1.0, 1.0, QuantMode::Ptq).unwrap();
        assert_eq!(s.scale, 1.0 / 32767.0);
        assert_eq!(s.zero_point, 0);
    }

    fn reference_round(y: f64) -> i64 {
        let f = y.floor();
        let d = y - f;
        let f = f as i64;
        if d > 0.5 || (d == 0.5 && f % 2 != 0) {
            f + 1
        } else {
            f
        }
    }

    #[test]
    fn half_even_tie() {
        let s = QuantScheme::from_range(8, 0.0, 1.0, QuantMode::Ptq).unwrap();
        assert_eq!(s.quantize(0.5), 128);
        assert_eq!(s.quantize(0.5) as i64, reference_round(0.5 / s.scale));
        for y in [2.5, 3.5, -2.5, -3.5, 0.49, 7.51, 1e6 + 0.5] {
            assert_eq!(round_half_even(y), reference_round(y), "{y}");
        }
    }

    #[test]
    fn degenerate_range_widens() {
        let s = QuantScheme::from_range(8, 0.0, 0.0, QuantMode::Ptq).unwrap();
        assert!(s.scale > 0.0);
        assert_eq!(s.zero_point, 0);
        let s = QuantScheme::from_range(16, 0.0, 0.0, QuantMode::Ptq).unwrap();
        assert!(s.scale > 0.0);
    }

    #[test]
    fn saturates() {
        let s = QuantScheme::from_range(8, -1.0, 1.0, QuantMode::Ptq).unwrap();
        assert_eq!(s.quantize(100.0), 255);
        assert_eq!(s.quantize(-100.0), 0);
        let s = QuantScheme::from_range(16, -1.0, 1.0, QuantMode::Ptq).unwrap();
        assert_eq!(s.quantize(100.0), 32767);
        assert_eq!(s.quantize(-100.0), -32768);
    }

    #[test]
    fn range_is_covered() {
        let s = QuantScheme::from_range(8, -0.37, 2.9, QuantMode::Ptq).unwrap();
        let (lo, hi) = s.representable();
        assert!(lo <= -0.37 + s.scale / 2.0);
        assert!(hi >= 2.9 - s.scale / 2.0);
        assert!((0..=255).contains(&s.zero_point));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(QuantScheme::from_range(4, 0.0, 1.0, QuantMode::Ptq).is_err());
        assert!(QuantScheme::from_range(8, f32::NAN, 1.0, QuantMode::Ptq).is_err());
        assert!(QuantScheme::from_range(8, 2.0, 1.0, QuantMode::Ptq).is_err());
    }
}
