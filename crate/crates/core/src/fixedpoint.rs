//! Signed fixed-point (Q-format) arithmetic: saturating quantization with
//! round-to-nearest-even, the multiply-accumulate primitive of the PE
//! datapath, and the LUT-based sigmoid/tanh of the nonlinear unit.
//!
//! All values are plain two's-complement raw integers carried in `i32`
//! regardless of their nominal width; the [`QFormat`] says how many bits are
//! meaningful and where the binary point sits. Every width reduction rounds
//! to nearest, ties to even; every overflow saturates instead of wrapping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed Q-format descriptor. A raw integer `v` encodes the real value
/// `v * 2^-frac_bits`, stored in `total_bits` two's-complement bits.
///
/// The display convention is `Qm.n` where `m = total_bits - frac_bits`
/// (integer bits including sign) and `n = frac_bits`: activations default to
/// Q8.8 (16 bits), weights to Q1.7 (8 bits), accumulators to Q17.15 (32 bits).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QFormat {
    total_bits: u8,
    frac_bits: u8,
}

impl QFormat {
    /// Validated constructor. Supported word sizes are 8, 16 and 32 bits.
    pub fn new(total_bits: u8, frac_bits: u8) -> Result<Self> {
        if !matches!(total_bits, 8 | 16 | 32) {
            return Err(Error::FormatUnsupported(format!(
                "{total_bits}-bit words are not supported (use 8, 16 or 32)"
            )));
        }
        if frac_bits >= total_bits {
            return Err(Error::FormatUnsupported(format!(
                "frac_bits {frac_bits} leaves no sign bit in {total_bits}-bit word"
            )));
        }
        Ok(Self {
            total_bits,
            frac_bits,
        })
    }

    /// Q8.8, the default 16-bit activation format.
    pub const fn q8_8() -> Self {
        Self {
            total_bits: 16,
            frac_bits: 8,
        }
    }

    /// Q1.7, the default 8-bit weight format.
    pub const fn q1_7() -> Self {
        Self {
            total_bits: 8,
            frac_bits: 7,
        }
    }

    /// The 32-bit accumulator format aligned to an activation x weight
    /// product: its fractional bits are the sum of the operand fractions,
    /// so raw products accumulate without any shift.
    pub const fn accumulator(act: QFormat, wgt: QFormat) -> Self {
        Self {
            total_bits: 32,
            frac_bits: act.frac_bits + wgt.frac_bits,
        }
    }

    pub const fn total_bits(&self) -> u8 {
        self.total_bits
    }

    pub const fn frac_bits(&self) -> u8 {
        self.frac_bits
    }

    /// Scale factor 2^frac_bits.
    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// Largest representable raw value, 2^(total_bits-1) - 1.
    pub const fn max_raw(&self) -> i32 {
        ((1i64 << (self.total_bits - 1)) - 1) as i32
    }

    /// Smallest representable raw value, -2^(total_bits-1).
    pub const fn min_raw(&self) -> i32 {
        (-(1i64 << (self.total_bits - 1))) as i32
    }

    /// Raw encoding of 1.0. Saturates for formats that cannot reach 1.0
    /// (e.g. Q1.7), so only meaningful when total_bits - frac_bits >= 2.
    pub const fn one_raw(&self) -> i32 {
        1i32 << self.frac_bits
    }

    pub fn contains_raw(&self, raw: i32) -> bool {
        raw >= self.min_raw() && raw <= self.max_raw()
    }

    pub const fn bytes(&self) -> usize {
        (self.total_bits / 8) as usize
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.total_bits - self.frac_bits, self.frac_bits)
    }
}

impl FromStr for QFormat {
    type Err = Error;

    /// Parses `Qm.n` (case-insensitive), e.g. `Q8.8` or `q1.7`.
    fn from_str(s: &str) -> Result<Self> {
        let body = s
            .strip_prefix('Q')
            .or_else(|| s.strip_prefix('q'))
            .ok_or_else(|| Error::Parse(format!("bad Q-format {s:?}")))?;
        let (int_s, frac_s) = body
            .split_once('.')
            .ok_or_else(|| Error::Parse(format!("bad Q-format {s:?}")))?;
        let int: u8 = int_s
            .parse()
            .map_err(|_| Error::Parse(format!("bad Q-format {s:?}")))?;
        let frac: u8 = frac_s
            .parse()
            .map_err(|_| Error::Parse(format!("bad Q-format {s:?}")))?;
        QFormat::new(
            int.checked_add(frac)
                .ok_or_else(|| Error::Parse(format!("bad Q-format {s:?}")))?,
            frac,
        )
    }
}

/// Round-to-nearest-even of `x`, saturated to the representable range of
/// `fmt`. Never traps; NaN maps to zero.
pub fn quantize(x: f64, fmt: QFormat) -> i32 {
    if x.is_nan() {
        return 0;
    }
    let scaled = (x * fmt.scale()).round_ties_even();
    if scaled >= fmt.max_raw() as f64 {
        fmt.max_raw()
    } else if scaled <= fmt.min_raw() as f64 {
        fmt.min_raw()
    } else {
        scaled as i32
    }
}

/// Real value of a raw integer in `fmt`.
pub fn dequantize(raw: i32, fmt: QFormat) -> f64 {
    raw as f64 / fmt.scale()
}

/// Arithmetic right shift with round-to-nearest-even on the dropped bits.
pub(crate) fn rne_shr(v: i64, shift: u32) -> i64 {
    if shift == 0 {
        return v;
    }
    let floor = v >> shift;
    let rem = v - (floor << shift); // in [0, 2^shift)
    let half = 1i64 << (shift - 1);
    if rem > half || (rem == half && (floor & 1) != 0) {
        floor + 1
    } else {
        floor
    }
}

fn clamp_to(v: i64, fmt: QFormat) -> i32 {
    v.clamp(fmt.min_raw() as i64, fmt.max_raw() as i64) as i32
}

/// Moves a raw value between formats: RNE when dropping fractional bits,
/// exact widening otherwise, saturating to the destination range.
pub fn requantize(raw: i32, from: QFormat, to: QFormat) -> i32 {
    let v = raw as i64;
    let shifted = if from.frac_bits >= to.frac_bits {
        rne_shr(v, (from.frac_bits - to.frac_bits) as u32)
    } else {
        v << (to.frac_bits - from.frac_bits)
    };
    clamp_to(shifted, to)
}

/// One PE multiply-accumulate: `acc + w * d`, exact in 64-bit intermediate
/// arithmetic, saturated to the 32-bit accumulator range. The product of a
/// weight and an activation delta carries `wgt.frac + act.frac` fractional
/// bits, which is the accumulator alignment by construction, so no shift is
/// involved.
pub fn mac(w: i32, d: i32, acc: i32) -> i32 {
    let sum = acc as i64 + (w as i64) * (d as i64);
    sum.clamp(i32::MIN as i64, i32::MAX as i64) as i32
}

/// Which nonlinearity a LUT encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NluFunction {
    Sigmoid,
    Tanh,
}

/// Number of entries in an NLU lookup table.
pub const NLU_ENTRIES: usize = 1024;

/// Inputs are clipped to [-NLU_INPUT_CLIP, NLU_INPUT_CLIP).
pub const NLU_INPUT_CLIP: f64 = 8.0;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A 1024-entry nonlinearity table over [-8, 8), direct-indexed with no
/// interpolation. Entry `i` holds the quantized function value at the lowest
/// raw input mapping to that entry, which makes tanh exactly odd-symmetric
/// about the center entry and pins f(0) at the center entry itself.
#[derive(Debug, Clone)]
pub struct NluLut {
    entries: Vec<i16>,
    fmt: QFormat,
    function: NluFunction,
}

impl NluLut {
    /// Builds the table for `function` in activation format `fmt`. The format
    /// must be 16-bit with at least 6 fractional bits so that each entry
    /// covers a whole number of raw input steps.
    pub fn new(function: NluFunction, fmt: QFormat) -> Result<Self> {
        if fmt.total_bits() != 16 || fmt.frac_bits() < 6 {
            return Err(Error::FormatUnsupported(format!(
                "NLU table needs a 16-bit activation format with >= 6 frac bits, got {fmt}"
            )));
        }
        let shift = (fmt.frac_bits() - 6) as u32;
        let lo = -(8i32 << fmt.frac_bits());
        let entries = (0..NLU_ENTRIES)
            .map(|i| {
                let raw_in = lo + ((i as i32) << shift);
                let x = dequantize(raw_in, fmt);
                let y = match function {
                    NluFunction::Sigmoid => sigmoid(x),
                    NluFunction::Tanh => x.tanh(),
                };
                quantize(y, fmt) as i16
            })
            .collect();
        Ok(Self {
            entries,
            fmt,
            function,
        })
    }

    pub fn function(&self) -> NluFunction {
        self.function
    }

    pub fn format(&self) -> QFormat {
        self.fmt
    }

    pub fn entries(&self) -> &[i16] {
        &self.entries
    }

    /// Table lookup. `x` is a raw value in `x_fmt`; it is requantized to the
    /// table's activation format (RNE), clipped to [-8, 8), and the top bits
    /// of the offset select the entry.
    pub fn eval(&self, x: i32, x_fmt: QFormat) -> i16 {
        let q = requantize(x, x_fmt, self.fmt);
        let f = self.fmt.frac_bits();
        let lo = -(8i32 << f);
        let hi = (8i32 << f) - 1;
        let c = q.clamp(lo, hi);
        let idx = ((c - lo) >> (f - 6)) as usize;
        self.entries[idx]
    }
}

/// Tensor shape: a vector or a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Vector(usize),
    Matrix { rows: usize, cols: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A tensor of raw fixed-point integers. Matrix data is stored column-major,
/// matching the weight memory layout where one column is one burst.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QTensor {
    data: Vec<i32>,
    shape: Shape,
    format: QFormat,
}

impl QTensor {
    /// Validates that the buffer matches the shape and that every raw value
    /// fits the format's width.
    pub fn new(data: Vec<i32>, shape: Shape, format: QFormat) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::dims("QTensor buffer", shape.len(), data.len()));
        }
        if let Some(bad) = data.iter().find(|&&v| !format.contains_raw(v)) {
            return Err(Error::FormatUnsupported(format!(
                "raw value {bad} does not fit {format}"
            )));
        }
        Ok(Self {
            data,
            shape,
            format,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn rows(&self) -> usize {
        match self.shape {
            Shape::Vector(n) => n,
            Shape::Matrix { rows, .. } => rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape {
            Shape::Vector(_) => 1,
            Shape::Matrix { cols, .. } => cols,
        }
    }

    /// Column `j` of a column-major matrix (a vector is its own column 0).
    pub fn col(&self, j: usize) -> &[i32] {
        let rows = self.rows();
        assert!(j < self.cols(), "column {j} out of range");
        &self.data[j * rows..(j + 1) * rows]
    }
}
