//! Matrix descriptors over a [`MemoryImage`] and host-side helpers to move
//! dense matrices in and out of simulated memory.

use half::f16;
use serde::{Deserialize, Serialize};

use crate::dtype::{DType, Lane, Layout};
use crate::memsim::{MemError, MemoryImage, DEFAULT_ALIGN};

/// Shape, element type, storage order and placement of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixView {
    pub rows: usize,
    pub cols: usize,
    pub dtype: DType,
    pub layout: Layout,
    /// Leading dimension in elements (row stride for row-major, column
    /// stride for column-major).
    pub ld: usize,
    pub base: u64,
}

impl MatrixView {
    pub fn new(rows: usize, cols: usize, dtype: DType, layout: Layout, ld: usize, base: u64) -> Result<Self, MemError> {
        let min_ld = match layout {
            Layout::Row => cols,
            Layout::Col => rows,
        };
        if ld < min_ld.max(1) {
            return Err(MemError::Config(format!("leading dimension {ld} smaller than {min_ld}")));
        }
        Ok(MatrixView { rows, cols, dtype, layout, ld, base })
    }

    /// Densely packed view (`ld` equal to the contiguous dimension).
    pub fn dense(rows: usize, cols: usize, dtype: DType, layout: Layout, base: u64) -> Self {
        let ld = match layout {
            Layout::Row => cols,
            Layout::Col => rows,
        }
        .max(1);
        MatrixView { rows, cols, dtype, layout, ld, base }
    }

    pub fn elem_bytes(&self) -> usize {
        self.dtype.bytes()
    }

    pub fn addr(&self, i: usize, j: usize) -> u64 {
        let idx = match self.layout {
            Layout::Row => i * self.ld + j,
            Layout::Col => j * self.ld + i,
        };
        self.base + (idx * self.elem_bytes()) as u64
    }

    /// Bytes spanned from `base` to one past the last element.
    pub fn span_bytes(&self) -> u64 {
        if self.rows == 0 || self.cols == 0 {
            return 0;
        }
        self.addr(self.rows - 1, self.cols - 1) + self.elem_bytes() as u64 - self.base
    }

    /// The same storage read as the transposed matrix.
    pub fn transposed(&self) -> Self {
        MatrixView { rows: self.cols, cols: self.rows, layout: self.layout.flip(), ..*self }
    }
}

/// Allocate a region and store a row-major host matrix into it with the
/// requested storage order.
pub fn store_matrix<T: Lane>(
    mem: &mut MemoryImage,
    name: &str,
    rows: usize,
    cols: usize,
    layout: Layout,
    row_major: &[T],
) -> Result<MatrixView, MemError> {
    assert_eq!(row_major.len(), rows * cols, "host matrix size");
    let bytes = (rows * cols * T::BYTES) as u64;
    let base = mem.alloc_region(name, bytes.max(1), DEFAULT_ALIGN)?;
    let view = MatrixView::dense(rows, cols, T::DTYPE, layout, base);
    write_matrix(mem, &view, row_major)?;
    Ok(view)
}

pub fn write_matrix<T: Lane>(mem: &MemoryImage, view: &MatrixView, row_major: &[T]) -> Result<(), MemError> {
    match view.layout {
        Layout::Row => {
            for i in 0..view.rows {
                mem.write_lanes(view.addr(i, 0), &row_major[i * view.cols..(i + 1) * view.cols])?;
            }
        }
        Layout::Col => {
            for j in 0..view.cols {
                let col: Vec<T> = (0..view.rows).map(|i| row_major[i * view.cols + j]).collect();
                mem.write_lanes(view.addr(0, j), &col)?;
            }
        }
    }
    Ok(())
}

/// Read a matrix back as a row-major host vector.
pub fn read_matrix<T: Lane>(mem: &MemoryImage, view: &MatrixView) -> Result<Vec<T>, MemError> {
    let mut out = vec![T::default(); view.rows * view.cols];
    match view.layout {
        Layout::Row => {
            for i in 0..view.rows {
                let row = mem.read_lanes::<T>(view.addr(i, 0), view.cols)?;
                out[i * view.cols..(i + 1) * view.cols].copy_from_slice(&row);
            }
        }
        Layout::Col => {
            for j in 0..view.cols {
                let col = mem.read_lanes::<T>(view.addr(0, j), view.rows)?;
                for (i, v) in col.into_iter().enumerate() {
                    out[i * view.cols + j] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Row-major host copy of a matrix in one of the supported element types.
#[derive(Debug, Clone, PartialEq)]
pub enum HostMatrix {
    F16(Vec<f16>),
    F32(Vec<f32>),
    F64(Vec<f64>),
    I8(Vec<i8>),
    I32(Vec<i32>),
}

macro_rules! each_variant {
    ($self:expr, $v:ident => $body:expr) => {
        match $self {
            HostMatrix::F16($v) => $body,
            HostMatrix::F32($v) => $body,
            HostMatrix::F64($v) => $body,
            HostMatrix::I8($v) => $body,
            HostMatrix::I32($v) => $body,
        }
    };
}

impl HostMatrix {
    pub fn zeros(dtype: DType, len: usize) -> Self {
        match dtype {
            DType::F16 => HostMatrix::F16(vec![f16::ZERO; len]),
            DType::F32 => HostMatrix::F32(vec![0.0; len]),
            DType::F64 => HostMatrix::F64(vec![0.0; len]),
            DType::I8 => HostMatrix::I8(vec![0; len]),
            DType::I32 => HostMatrix::I32(vec![0; len]),
            other => panic!("no host matrix for {other:?}"),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            HostMatrix::F16(_) => DType::F16,
            HostMatrix::F32(_) => DType::F32,
            HostMatrix::F64(_) => DType::F64,
            HostMatrix::I8(_) => DType::I8,
            HostMatrix::I32(_) => DType::I32,
        }
    }

    pub fn len(&self) -> usize {
        each_variant!(self, v => v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            HostMatrix::F16(v) => v.iter().map(|x| x.to_f64()).collect(),
            HostMatrix::F32(v) => v.iter().map(|&x| x as f64).collect(),
            HostMatrix::F64(v) => v.clone(),
            HostMatrix::I8(v) => v.iter().map(|&x| x as f64).collect(),
            HostMatrix::I32(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    /// Raw bit patterns, for exact comparisons that distinguish -0 and NaNs.
    pub fn to_bits(&self) -> Vec<u64> {
        match self {
            HostMatrix::F16(v) => v.iter().map(|x| x.to_bits() as u64).collect(),
            HostMatrix::F32(v) => v.iter().map(|x| x.to_bits() as u64).collect(),
            HostMatrix::F64(v) => v.iter().map(|x| x.to_bits()).collect(),
            HostMatrix::I8(v) => v.iter().map(|&x| x as u8 as u64).collect(),
            HostMatrix::I32(v) => v.iter().map(|&x| x as u32 as u64).collect(),
        }
    }

    pub fn store(&self, mem: &mut MemoryImage, name: &str, rows: usize, cols: usize, layout: Layout) -> Result<MatrixView, MemError> {
        each_variant!(self, v => store_matrix(mem, name, rows, cols, layout, v))
    }

    pub fn load(mem: &MemoryImage, view: &MatrixView) -> Result<Self, MemError> {
        Ok(match view.dtype {
            DType::F16 => HostMatrix::F16(read_matrix(mem, view)?),
            DType::F32 => HostMatrix::F32(read_matrix(mem, view)?),
            DType::F64 => HostMatrix::F64(read_matrix(mem, view)?),
            DType::I8 => HostMatrix::I8(read_matrix(mem, view)?),
            DType::I32 => HostMatrix::I32(read_matrix(mem, view)?),
            other => return Err(MemError::Config(format!("no host matrix for {other:?}"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_roundtrip() {
        let data: Vec<f32> = (0..12).map(|x| x as f32).collect();
        for layout in [Layout::Row, Layout::Col] {
            let mut mem = MemoryImage::new(4096);
            let v = store_matrix(&mut mem, "m", 3, 4, layout, &data).unwrap();
            assert_eq!(read_matrix::<f32>(&mem, &v).unwrap(), data);
            assert_eq!(v.span_bytes(), 48);
        }
    }

    #[test]
    fn transposed_view_reads_transpose() {
        let data: Vec<i32> = (0..6).collect();
        let mut mem = MemoryImage::new(4096);
        let v = store_matrix(&mut mem, "m", 2, 3, Layout::Row, &data).unwrap();
        let t = read_matrix::<i32>(&mem, &v.transposed()).unwrap();
        assert_eq!(t, vec![0, 3, 1, 4, 2, 5]);
    }

    #[test]
    fn ld_checked() {
        assert!(MatrixView::new(4, 8, DType::F32, Layout::Row, 7, 0).is_err());
        let v = MatrixView::new(4, 8, DType::F32, Layout::Row, 10, 0).unwrap();
        assert_eq!(v.addr(1, 2), 48);
    }
}
