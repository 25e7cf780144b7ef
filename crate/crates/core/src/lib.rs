//! Simulated SME matrix engine and a multi-precision blocked GEMM built on it.

pub mod driver;
pub mod dtype;
pub mod kernels;
pub mod matrix;
pub mod memsim;
pub mod oracle;
pub mod packing;
pub mod tiling;
pub mod vsme;

pub use dtype::{DType, Layout, PrecisionPair};
