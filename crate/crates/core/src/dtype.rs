//! Element types, lane encodings and the precision pairs the GEMM supports.

use std::fmt;
use std::str::FromStr;

use half::{bf16, f16};
use serde::{Deserialize, Serialize};

/// Scalar element types that can live in memory, Z registers or ZA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F16,
    Bf16,
    F32,
    F64,
    I8,
    I16,
    I32,
    I64,
}

impl DType {
    pub const fn bytes(self) -> usize {
        match self {
            DType::I8 => 1,
            DType::F16 | DType::Bf16 | DType::I16 => 2,
            DType::F32 | DType::I32 => 4,
            DType::F64 | DType::I64 => 8,
        }
    }

    pub const fn bits(self) -> usize {
        self.bytes() * 8
    }

    /// Small stable code used by the packed-buffer dump header.
    pub const fn code(self) -> u8 {
        match self {
            DType::F16 => 1,
            DType::Bf16 => 2,
            DType::F32 => 3,
            DType::F64 => 4,
            DType::I8 => 5,
            DType::I16 => 6,
            DType::I32 => 7,
            DType::I64 => 8,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => DType::F16,
            2 => DType::Bf16,
            3 => DType::F32,
            4 => DType::F64,
            5 => DType::I8,
            6 => DType::I16,
            7 => DType::I32,
            8 => DType::I64,
            _ => return None,
        })
    }
}

/// Fixed-width little-endian lane codec.
pub trait Lane: Copy + Default + PartialEq + fmt::Debug + Send + Sync + 'static {
    const DTYPE: DType;
    const BYTES: usize = Self::DTYPE.bytes();

    fn read_le(bytes: &[u8]) -> Self;
    fn write_le(self, out: &mut [u8]);
}

macro_rules! impl_lane {
    ($t:ty, $d:expr, $n:expr) => {
        impl Lane for $t {
            const DTYPE: DType = $d;

            #[inline]
            fn read_le(bytes: &[u8]) -> Self {
                let mut raw = [0u8; $n];
                raw.copy_from_slice(&bytes[..$n]);
                <$t>::from_le_bytes(raw)
            }

            #[inline]
            fn write_le(self, out: &mut [u8]) {
                out[..$n].copy_from_slice(&self.to_le_bytes());
            }
        }
    };
}

impl_lane!(i8, DType::I8, 1);
impl_lane!(i16, DType::I16, 2);
impl_lane!(i32, DType::I32, 4);
impl_lane!(i64, DType::I64, 8);
impl_lane!(f32, DType::F32, 4);
impl_lane!(f64, DType::F64, 8);
impl_lane!(f16, DType::F16, 2);
impl_lane!(bf16, DType::Bf16, 2);

/// Decode a whole byte slice as consecutive lanes.
pub fn decode_lanes<T: Lane>(bytes: &[u8]) -> Vec<T> {
    bytes.chunks_exact(T::BYTES).map(T::read_le).collect()
}

/// Encode lanes into a fresh byte vector.
pub fn encode_lanes<T: Lane>(values: &[T]) -> Vec<u8> {
    let mut out = vec![0u8; values.len() * T::BYTES];
    for (v, chunk) in values.iter().zip(out.chunks_exact_mut(T::BYTES)) {
        v.write_le(chunk);
    }
    out
}

/// Input/output type combinations handled by the GEMM driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrecisionPair {
    /// f32 inputs, f32 accumulation and output.
    #[serde(rename = "f32")]
    F32,
    /// f64 inputs, f64 accumulation and output.
    #[serde(rename = "f64")]
    F64,
    /// f16 inputs widened into f32 accumulators.
    #[serde(rename = "f16")]
    F16F32,
    /// i8 inputs widened into i32 accumulators.
    #[serde(rename = "i8")]
    I8I32,
}

impl PrecisionPair {
    pub const ALL: [PrecisionPair; 4] = [
        PrecisionPair::F32,
        PrecisionPair::F64,
        PrecisionPair::F16F32,
        PrecisionPair::I8I32,
    ];

    pub const fn input(self) -> DType {
        match self {
            PrecisionPair::F32 => DType::F32,
            PrecisionPair::F64 => DType::F64,
            PrecisionPair::F16F32 => DType::F16,
            PrecisionPair::I8I32 => DType::I8,
        }
    }

    /// The pair whose input element type is `d`, if any.
    pub fn from_input(d: DType) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.input() == d)
    }

    pub const fn output(self) -> DType {
        match self {
            PrecisionPair::F32 | PrecisionPair::F16F32 => DType::F32,
            PrecisionPair::F64 => DType::F64,
            PrecisionPair::I8I32 => DType::I32,
        }
    }

    /// Number of consecutive K elements packed into one accumulator-width
    /// unit (pairs for f16, quads for i8).
    pub const fn k_group(self) -> usize {
        self.output().bytes() / self.input().bytes()
    }

    /// Bytes of one packed unit; equals the accumulator element size.
    pub const fn unit_bytes(self) -> usize {
        self.output().bytes()
    }

    /// K granularity (in input elements) of the micro-kernel loop: 16 units.
    pub const fn k_unit(self) -> usize {
        16 * self.k_group()
    }

    pub const fn is_integer(self) -> bool {
        matches!(self, PrecisionPair::I8I32)
    }

    pub const fn label(self) -> &'static str {
        match self {
            PrecisionPair::F32 => "f32",
            PrecisionPair::F64 => "f64",
            PrecisionPair::F16F32 => "f16",
            PrecisionPair::I8I32 => "i8",
        }
    }
}

impl fmt::Display for PrecisionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecisionPair::F32 => "f32->f32",
            PrecisionPair::F64 => "f64->f64",
            PrecisionPair::F16F32 => "f16->f32",
            PrecisionPair::I8I32 => "i8->i32",
        })
    }
}

impl FromStr for PrecisionPair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f32" | "f32->f32" | "fp32" => Ok(PrecisionPair::F32),
            "f64" | "f64->f64" | "fp64" => Ok(PrecisionPair::F64),
            "f16" | "f16->f32" | "fp16" => Ok(PrecisionPair::F16F32),
            "i8" | "i8->i32" | "int8" => Ok(PrecisionPair::I8I32),
            other => Err(format!("unknown precision `{other}` (expected f32, f64, f16 or i8)")),
        }
    }
}

/// Storage order of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    #[default]
    Row,
    Col,
}

impl Layout {
    pub const fn flip(self) -> Self {
        match self {
            Layout::Row => Layout::Col,
            Layout::Col => Layout::Row,
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Row => "row",
            Layout::Col => "col",
        })
    }
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "row" | "row-major" => Ok(Layout::Row),
            "col" | "column" | "col-major" | "column-major" => Ok(Layout::Col),
            other => Err(format!("unknown layout `{other}` (expected row or col)")),
        }
    }
}
