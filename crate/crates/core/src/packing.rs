//! Packing of A and B blocks into the contiguous panel buffers read by the
//! micro-kernels. All data movement goes through the simulated ISA.
//!
//! A block (`rows x kc`) becomes column-major panels of `T` rows, where a
//! column holds one *unit* per row: one element for f32/f64, an adjacent
//! K pair for f16, a K quad for i8. The transpose runs through ZA: source
//! rows are written as horizontal slices and read back as vertical slices
//! of the unit-width tiles.
//!
//! B block (`kc x cols`) becomes row-major panels of `nr` unit columns. For
//! f16 each panel is split into two 32-column sub-blocks, each stored as its
//! own row-major `kcu x 32` array; i8 quad rows are produced by byte zips.
//! Panel `p` of either buffer starts at `base + p * panel_bytes`.

use std::io::{Read, Write};
use std::path::Path;

use crate::dtype::{DType, Lane, Layout, PrecisionPair};
use crate::matrix::MatrixView;
use crate::memsim::MemoryImage;
use crate::vsme::{IsaError, MachineState, MovaDirection, Orientation, TileView};

/// Panel dimensions for one precision at one vector length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PanelGeometry {
    pub precision: PrecisionPair,
    vl: usize,
}

impl PanelGeometry {
    pub fn new(precision: PrecisionPair, svl_bits: usize) -> Self {
        PanelGeometry { precision, vl: svl_bits / 8 }
    }

    pub fn vl_bytes(&self) -> usize {
        self.vl
    }

    pub fn unit_bytes(&self) -> usize {
        self.precision.unit_bytes()
    }

    pub fn k_group(&self) -> usize {
        self.precision.k_group()
    }

    pub fn elem_bits(&self) -> usize {
        self.precision.input().bits()
    }

    pub fn unit_bits(&self) -> usize {
        self.unit_bytes() * 8
    }

    /// Rows of an A panel, and side of one accumulator tile.
    pub fn panel_rows(&self) -> usize {
        self.vl / self.unit_bytes()
    }

    /// Columns of a B panel.
    pub fn nr(&self) -> usize {
        4 * self.panel_rows()
    }

    /// Registers per unit row inside one B sub-block.
    pub fn b_seg_regs(&self) -> usize {
        if self.precision == PrecisionPair::F16F32 {
            2
        } else {
            4
        }
    }

    pub fn b_seg_cols(&self) -> usize {
        self.b_seg_regs() * self.panel_rows()
    }

    /// Unit count covering `kc` elements, rounded up to the kernel step.
    pub fn kcu_for(&self, kc: usize) -> usize {
        kc.div_ceil(self.precision.k_unit()) * 16
    }

    pub fn a_panel_bytes(&self, kcu: usize) -> u64 {
        (self.panel_rows() * kcu * self.unit_bytes()) as u64
    }

    pub fn b_panel_bytes(&self, kcu: usize) -> u64 {
        (kcu * self.nr() * self.unit_bytes()) as u64
    }

    pub fn ac_bytes(&self, rows: usize, kcu: usize) -> u64 {
        rows.div_ceil(self.panel_rows()) as u64 * self.a_panel_bytes(kcu)
    }

    pub fn bc_bytes(&self, cols: usize, kcu: usize) -> u64 {
        cols.div_ceil(self.nr()) as u64 * self.b_panel_bytes(kcu)
    }

    /// Source columns covered by one four-register row load during B packing.
    pub fn b_chunk_cols(&self) -> usize {
        4 * self.vl * 8 / self.elem_bits()
    }

    pub fn b_chunks(&self, cols: usize) -> usize {
        cols.div_ceil(self.b_chunk_cols())
    }

    /// Byte offset of unit `(unit_row, col)` inside a B panel.
    pub fn b_unit_offset(&self, kcu: usize, unit_row: usize, col: usize) -> u64 {
        let seg_regs = self.b_seg_regs();
        let seg_cols = self.b_seg_cols();
        let seg = col / seg_cols;
        ((seg * kcu + unit_row) * seg_regs * self.vl + (col % seg_cols) * self.unit_bytes()) as u64
    }

    /// Byte offset of unit `(row, unit_col)` inside an A buffer.
    pub fn a_unit_offset(&self, kcu: usize, row: usize, unit_col: usize) -> u64 {
        let t = self.panel_rows();
        (row / t) as u64 * self.a_panel_bytes(kcu) + ((unit_col * t + row % t) * self.unit_bytes()) as u64
    }
}

fn precision_of(view: &MatrixView) -> Result<PrecisionPair, IsaError> {
    PrecisionPair::from_input(view.dtype)
        .ok_or_else(|| IsaError::Usage(format!("no packing scheme for {:?} elements", view.dtype)))
}

fn check_source(view: &MatrixView, geom: &PanelGeometry, what: &str) -> Result<(), IsaError> {
    if view.layout != Layout::Row {
        return Err(IsaError::Usage(format!("{what} packer expects a row-major source")));
    }
    if view.dtype != geom.precision.input() {
        return Err(IsaError::Usage(format!(
            "{what} packer for {} got {:?} data",
            geom.precision, view.dtype
        )));
    }
    Ok(())
}

/// Pack `rows x kcols` elements of `a` starting at `(i0, k0)` into `ac` as
/// transposed panels through ZA. K is zero-padded to `kcu` units and rows
/// to a multiple of the panel height.
#[allow(clippy::too_many_arguments)]
pub fn pack_a(
    m: &mut MachineState,
    mem: &MemoryImage,
    a: &MatrixView,
    (i0, k0): (usize, usize),
    (rows, kcols): (usize, usize),
    kcu: usize,
    ac: u64,
    max_group: usize,
) -> Result<(), IsaError> {
    let geom = PanelGeometry::new(precision_of(a)?, m.svl_bits());
    check_source(a, &geom, "A")?;
    let t = geom.panel_rows();
    let g = geom.k_group();
    let ub = geom.unit_bytes();
    let ew = geom.elem_bits();
    let eb = ew / 8;
    let vl = m.vl_bytes();
    // One sub-panel fills every unit-width tile: `ub` tiles of side `t`.
    let sub_units = ub * t;
    let was_edge = m.edge_scope();
    for p in 0..rows.div_ceil(t) {
        let rows_act = (rows - p * t).min(t);
        let panel = ac + p as u64 * geom.a_panel_bytes(kcu);
        for s in 0..kcu.div_ceil(sub_units) {
            let units = (kcu - s * sub_units).min(sub_units);
            let elems = kcols.saturating_sub(s * sub_units * g).min(sub_units * g);
            m.set_edge_scope(was_edge || rows_act < t || elems < sub_units * g);
            m.zero_za_all();
            if elems > 0 {
                for r in 0..rows_act {
                    let src = a.addr(i0 + p * t + r, k0 + s * sub_units * g);
                    m.ld_span(mem, src, 0, ub, ew, elems, max_group)?;
                    for z in 0..ub {
                        let za_row = r * ub + z;
                        let tile = TileView::new(ew, za_row % eb)?;
                        m.mova(MovaDirection::RegToTile, tile, za_row / eb, Orientation::Horizontal, z, None)?;
                    }
                }
            }
            for c4 in (0..units).step_by(4) {
                for q in 0..4 {
                    let c = c4 + q;
                    let tile = TileView::new(ub * 8, c / t)?;
                    m.mova(MovaDirection::TileToReg, tile, c % t, Orientation::Vertical, 8 + q, None)?;
                }
                let dst = panel + ((s * sub_units + c4) * t * ub) as u64;
                m.st_span(mem, dst, 8, 4, ub * 8, 4 * vl / ub, max_group)?;
            }
        }
    }
    m.set_edge_scope(was_edge);
    Ok(())
}

/// Pack one column chunk (see [`PanelGeometry::b_chunk_cols`]) of the
/// `krows x cols` block of `b` at `(k0, j0)` into `bc`. Packing every chunk
/// in any order yields the same buffer.
#[allow(clippy::too_many_arguments)]
pub fn pack_b_chunk(
    m: &mut MachineState,
    mem: &MemoryImage,
    b: &MatrixView,
    (k0, j0): (usize, usize),
    (krows, cols): (usize, usize),
    kcu: usize,
    bc: u64,
    chunk: usize,
    max_group: usize,
) -> Result<(), IsaError> {
    let geom = PanelGeometry::new(precision_of(b)?, m.svl_bits());
    check_source(b, &geom, "B")?;
    let cc = geom.b_chunk_cols();
    let c0 = chunk * cc;
    if c0 >= cols {
        return Err(IsaError::Usage(format!("B chunk {chunk} starts past column count {cols}")));
    }
    let cols_act = (cols - c0).min(cc);
    let panels = cols.div_ceil(geom.nr());
    let ew = geom.elem_bits();
    let g = geom.k_group();
    let ub = geom.unit_bytes();
    let vl = m.vl_bytes();
    let full = 4 * vl / ub;
    let was_edge = m.edge_scope();
    m.set_edge_scope(was_edge || cols_act < cc || krows < kcu * g);

    // Load source row `k` (relative to k0) into four registers, or zeros past the block.
    let load_row = |m: &mut MachineState, k: usize, first: usize| -> Result<(), IsaError> {
        if k < krows {
            m.ld_span(mem, b.addr(k0 + k, j0 + c0), first, 4, ew, cols_act, max_group)
        } else {
            (first..first + 4).try_for_each(|r| m.zero_reg(r))
        }
    };
    let panel_base = |p: usize| bc + p as u64 * geom.b_panel_bytes(kcu);

    match geom.precision {
        PrecisionPair::F32 | PrecisionPair::F64 => {
            for u in 0..kcu {
                load_row(m, u, 0)?;
                m.st_span(mem, panel_base(chunk) + geom.b_unit_offset(kcu, u, 0), 0, 4, ub * 8, full, max_group)?;
            }
        }
        PrecisionPair::F16F32 => {
            // Four source rows make two pair rows; each 32-column slice of
            // them is one register pair per pair row.
            for u in (0..kcu).step_by(2) {
                for s in 0..4 {
                    load_row(m, 2 * u + s, 4 * s)?;
                }
                for c in 0..4 {
                    let sub_block = chunk * 4 + c;
                    if sub_block / 2 >= panels {
                        continue;
                    }
                    m.zip(16, 17, c, 4 + c, 16)?;
                    m.zip(18, 19, 8 + c, 12 + c, 16)?;
                    let dst = panel_base(sub_block / 2) + geom.b_unit_offset(kcu, u, (sub_block % 2) * geom.b_seg_cols());
                    m.st_span(mem, dst, 16, 4, 32, full, max_group)?;
                }
            }
        }
        PrecisionPair::I8I32 => {
            for u in 0..kcu {
                for s in 0..4 {
                    load_row(m, 4 * u + s, 4 * s)?;
                }
                for c in 0..4 {
                    let panel = chunk * 4 + c;
                    if panel >= panels {
                        continue;
                    }
                    // Byte zips of (r0, r2) and (r1, r3), then of the results,
                    // give r0 r1 r2 r3 per column.
                    m.zip(16, 17, c, 8 + c, 8)?;
                    m.zip(18, 19, 4 + c, 12 + c, 8)?;
                    m.zip(20, 21, 16, 18, 8)?;
                    m.zip(22, 23, 17, 19, 8)?;
                    m.st_span(mem, panel_base(panel) + geom.b_unit_offset(kcu, u, 0), 20, 4, 32, full, max_group)?;
                }
            }
        }
    }
    m.set_edge_scope(was_edge);
    Ok(())
}

/// Pack a whole B block chunk by chunk.
#[allow(clippy::too_many_arguments)]
pub fn pack_b(
    m: &mut MachineState,
    mem: &MemoryImage,
    b: &MatrixView,
    origin: (usize, usize),
    dims: (usize, usize),
    kcu: usize,
    bc: u64,
    max_group: usize,
) -> Result<(), IsaError> {
    let geom = PanelGeometry::new(precision_of(b)?, m.svl_bits());
    for chunk in 0..geom.b_chunks(dims.1) {
        pack_b_chunk(m, mem, b, origin, dims, kcu, bc, chunk, max_group)?;
    }
    Ok(())
}

/// Read a packed A buffer back as a row-major `rows x kcols` block.
pub fn unpack_a<T: Lane>(buf: &[u8], geom: &PanelGeometry, kcu: usize, rows: usize, kcols: usize) -> Vec<T> {
    let g = geom.k_group();
    let mut out = Vec::with_capacity(rows * kcols);
    for i in 0..rows {
        for k in 0..kcols {
            let off = geom.a_unit_offset(kcu, i, k / g) as usize + (k % g) * T::BYTES;
            out.push(T::read_le(&buf[off..]));
        }
    }
    out
}

/// Read a packed B buffer back as a row-major `krows x cols` block.
pub fn unpack_b<T: Lane>(buf: &[u8], geom: &PanelGeometry, kcu: usize, krows: usize, cols: usize) -> Vec<T> {
    let g = geom.k_group();
    let nr = geom.nr();
    let mut out = Vec::with_capacity(krows * cols);
    for k in 0..krows {
        for j in 0..cols {
            let off = (j / nr) as u64 * geom.b_panel_bytes(kcu) + geom.b_unit_offset(kcu, k / g, j % nr);
            out.push(T::read_le(&buf[off as usize + (k % g) * T::BYTES..]));
        }
    }
    out
}

const DUMP_MAGIC: &[u8; 4] = b"PKBF";
const DUMP_VERSION: u32 = 1;

/// Header of a packed-buffer dump file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpHeader {
    pub rows: u64,
    pub cols: u64,
    pub dtype: DType,
    pub interleave: u8,
}

/// Write a packed buffer as `PKBF | version u32 | rows u64 | cols u64 |
/// dtype u8 | interleave u8 | raw bytes`, all little-endian.
pub fn write_dump(path: &Path, header: &DumpHeader, bytes: &[u8]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(DUMP_MAGIC)?;
    f.write_all(&DUMP_VERSION.to_le_bytes())?;
    f.write_all(&header.rows.to_le_bytes())?;
    f.write_all(&header.cols.to_le_bytes())?;
    f.write_all(&[header.dtype.code(), header.interleave])?;
    f.write_all(bytes)?;
    f.flush()
}

pub fn read_dump(path: &Path) -> std::io::Result<(DumpHeader, Vec<u8>)> {
    let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    if data.len() < 26 || &data[..4] != DUMP_MAGIC {
        return Err(bad("not a packed-buffer dump"));
    }
    if u32::from_le_bytes(data[4..8].try_into().unwrap()) != DUMP_VERSION {
        return Err(bad("unsupported dump version"));
    }
    let rows = u64::from_le_bytes(data[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(data[16..24].try_into().unwrap());
    let dtype = DType::from_code(data[24]).ok_or_else(|| bad("unknown dtype code"))?;
    Ok((DumpHeader { rows, cols, dtype, interleave: data[25] }, data[26..].to_vec()))
}
