//! Main and edge micro-kernels on the simulated ISA.
//!
//! The main kernel computes a `T x 4T` block of C with four accumulator
//! tiles side by side; the edge kernel computes `4T x T` with four tiles
//! stacked, for column remainders narrower than a main panel. `T` is the
//! accumulator tile side (16 for 32-bit accumulators at 512 bits).
//!
//! Register use in the main kernel: A unit columns in Z0-Z3 and Z20-Z23
//! (alternating per step so the next A load can issue before the current
//! outer products), B unit rows in Z4-Z19, C staging in Z20-Z27 before and
//! after the loop. The next step's B rows are loaded as soon as the outer
//! products reading the same registers have issued.
//!
//! Scaling: with `alpha == 1` the accumulators start from `beta * C` and
//! the result is stored directly. Otherwise they start from zero and the
//! writeback computes `alpha * acc + beta * C`.

use serde::{Deserialize, Serialize};

use crate::dtype::PrecisionPair;
use crate::memsim::MemoryImage;
use crate::packing::PanelGeometry;
use crate::vsme::{
    FmopaPrecision, IsaError, KernelClass, MachineState, MovaDirection, Orientation, PredicateReg, Scalar,
    SmopaPrecision, TileView,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelShape {
    /// `T x 4T`, four tiles in a row.
    Main,
    /// `4T x T`, four tiles in a column.
    Edge,
}

/// Where the kernel reads its B operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BSource {
    /// A packed panel; `col_offset` selects the first unit column (edge strips).
    Packed { panel: u64, col_offset: usize },
    /// Unpacked row-major B (f32/f64 only): address of the first element, row
    /// stride in elements, and the number of valid K rows.
    Strided { addr: u64, ld: usize, k_rows: usize },
}

/// Block of C updated by one kernel call. `ld` is in elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CTile {
    pub addr: u64,
    pub ld: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroTask {
    pub precision: PrecisionPair,
    pub shape: KernelShape,
    /// First A panel; the edge kernel reads four consecutive panels.
    pub a_panel: u64,
    pub a_panel_stride: u64,
    pub b: BSource,
    pub c: CTile,
    /// K extent in packed units, a multiple of 16.
    pub kcu: usize,
    pub alpha: f64,
    pub beta: f64,
}

/// Convert a scaling factor to the accumulator type. Integer kernels only
/// accept integral factors that fit in i32.
pub fn accumulator_scalar(precision: PrecisionPair, v: f64) -> Result<Scalar, IsaError> {
    match precision {
        PrecisionPair::F32 | PrecisionPair::F16F32 => Ok(Scalar::F32(v as f32)),
        PrecisionPair::F64 => Ok(Scalar::F64(v)),
        PrecisionPair::I8I32 => {
            if v.fract() != 0.0 || v < i32::MIN as f64 || v > i32::MAX as f64 {
                return Err(IsaError::Usage(format!("integer GEMM needs an integral i32 scale factor, got {v}")));
            }
            Ok(Scalar::I32(v as i32))
        }
    }
}

fn is_one(s: Scalar) -> bool {
    matches!(s, Scalar::F32(x) if x == 1.0) || matches!(s, Scalar::F64(x) if x == 1.0) || s == Scalar::I32(1)
}

fn is_zero(s: Scalar) -> bool {
    matches!(s, Scalar::F32(x) if x == 0.0) || matches!(s, Scalar::F64(x) if x == 0.0) || s == Scalar::I32(0)
}

fn mopa(
    m: &mut MachineState,
    precision: PrecisionPair,
    tile: TileView,
    a: usize,
    b: usize,
    pa: Option<&PredicateReg>,
    pb: Option<&PredicateReg>,
) -> Result<(), IsaError> {
    match precision {
        PrecisionPair::F32 => m.fmopa(tile, a, b, pa, pb, FmopaPrecision::F32),
        PrecisionPair::F64 => m.fmopa(tile, a, b, pa, pb, FmopaPrecision::F64),
        PrecisionPair::F16F32 => m.fmopa(tile, a, b, pa, pb, FmopaPrecision::F16Widen),
        PrecisionPair::I8I32 => m.smopa(tile, a, b, pa, pb, SmopaPrecision::I8Widen),
    }
}

const C_STAGE: usize = 20;
const C_OLD: usize = 24;

/// Run one micro-kernel. `max_group` caps the register count of each
/// load/store (4 normally, 1 to disable multi-register transfers).
pub fn run_kernel(m: &mut MachineState, mem: &MemoryImage, task: &MicroTask, max_group: usize) -> Result<(), IsaError> {
    let geom = PanelGeometry::new(task.precision, m.svl_bits());
    let t = geom.panel_rows();
    let (rmax, cmax) = match task.shape {
        KernelShape::Main => (t, 4 * t),
        KernelShape::Edge => (4 * t, t),
    };
    if task.kcu == 0 || !task.kcu.is_multiple_of(16) {
        return Err(IsaError::Usage(format!("kernel K extent {} units is not a positive multiple of 16", task.kcu)));
    }
    if task.c.rows > rmax || task.c.cols > cmax {
        return Err(IsaError::Usage(format!(
            "{:?} kernel covers at most {rmax}x{cmax}, got {}x{}",
            task.shape, task.c.rows, task.c.cols
        )));
    }
    if matches!(task.b, BSource::Strided { .. }) && geom.k_group() != 1 {
        return Err(IsaError::Usage(format!("{} kernels need packed B", task.precision)));
    }
    let alpha = accumulator_scalar(task.precision, task.alpha)?;
    let beta = accumulator_scalar(task.precision, task.beta)?;

    let was_edge = m.edge_scope();
    let class = match task.shape {
        KernelShape::Main => KernelClass::Main,
        KernelShape::Edge => KernelClass::Edge,
    };
    m.set_edge_scope(was_edge || class == KernelClass::Edge || task.c.rows < rmax || task.c.cols < cmax);
    m.begin_kernel();
    let acc_bits = geom.unit_bits();
    let tiles: Vec<TileView> = (0..4).map(|i| TileView::new(acc_bits, i)).collect::<Result<_, _>>()?;

    let fused = is_one(alpha);
    m.zero_za(&tiles)?;
    if fused && !is_zero(beta) {
        for i in 0..task.c.rows {
            let (tile, slice, nregs) = c_row_target(task, t, i);
            load_c_row(m, mem, task, i, nregs, max_group)?;
            if !is_one(beta) {
                for r in C_STAGE..C_STAGE + nregs {
                    m.vscale(r, r, beta)?;
                }
            }
            for q in 0..nregs {
                m.mova(MovaDirection::RegToTile, tiles[tile + q], slice, Orientation::Horizontal, C_STAGE + q, None)?;
            }
        }
    }

    match task.shape {
        KernelShape::Main => main_loop(m, mem, task, &geom, &tiles, max_group)?,
        KernelShape::Edge => edge_loop(m, mem, task, &geom, &tiles, max_group)?,
    }

    for i in 0..task.c.rows {
        let (tile, slice, nregs) = c_row_target(task, t, i);
        for q in 0..nregs {
            m.mova(MovaDirection::TileToReg, tiles[tile + q], slice, Orientation::Horizontal, C_STAGE + q, None)?;
        }
        if !fused {
            for q in 0..nregs {
                m.vscale(C_STAGE + q, C_STAGE + q, alpha)?;
            }
            if !is_zero(beta) {
                let c_row = task.c.addr + (i * task.c.ld * acc_bits / 8) as u64;
                m.ld_span(mem, c_row, C_OLD, nregs, acc_bits, task.c.cols, max_group)?;
                for q in 0..nregs {
                    if !is_one(beta) {
                        m.vscale(C_OLD + q, C_OLD + q, beta)?;
                    }
                    m.vadd(C_STAGE + q, C_STAGE + q, C_OLD + q, alpha)?;
                }
            }
        }
        let c_row = task.c.addr + (i * task.c.ld * acc_bits / 8) as u64;
        m.st_span(mem, c_row, C_STAGE, nregs, acc_bits, task.c.cols, max_group)?;
    }

    m.end_kernel(class, acc_bits);
    m.set_edge_scope(was_edge);
    Ok(())
}

/// First tile, slice index and register count holding C row `i`.
fn c_row_target(task: &MicroTask, t: usize, i: usize) -> (usize, usize, usize) {
    match task.shape {
        KernelShape::Main => (0, i, 4),
        KernelShape::Edge => (i / t, i % t, 1),
    }
}

fn load_c_row(
    m: &mut MachineState,
    mem: &MemoryImage,
    task: &MicroTask,
    i: usize,
    nregs: usize,
    max_group: usize,
) -> Result<(), IsaError> {
    let acc_bits = task.precision.output().bits();
    let addr = task.c.addr + (i * task.c.ld * acc_bits / 8) as u64;
    m.ld_span(mem, addr, C_STAGE, nregs, acc_bits, task.c.cols, max_group)
}

/// Lane predicate covering `units` packed units at source element width,
/// or `None` when all `full` units are live.
fn unit_pred(m: &MachineState, geom: &PanelGeometry, units: usize, full: usize) -> Option<PredicateReg> {
    (units < full).then(|| m.whilelt(0, units * geom.k_group(), geom.elem_bits()))
}

/// One grouped B load of a main-kernel step.
struct BLoad {
    first_reg: usize,
    first_row: usize,
    rows: usize,
}

fn main_loop(
    m: &mut MachineState,
    mem: &MemoryImage,
    task: &MicroTask,
    geom: &PanelGeometry,
    tiles: &[TileView],
    max_group: usize,
) -> Result<(), IsaError> {
    let t = geom.panel_rows();
    let ub = geom.unit_bytes();
    let ew = geom.elem_bits();
    let vl = m.vl_bytes();
    let seg_regs = geom.b_seg_regs();
    let lanes4 = 4 * vl * 8 / ew;
    let reg_of = |q: usize, tile: usize| 4 + (tile / seg_regs) * 4 * seg_regs + q * seg_regs + tile % seg_regs;

    let rows_per_load = 4 / seg_regs;
    let mut b_loads = Vec::new();
    for seg in 0..4 / seg_regs {
        for q0 in (0..4).step_by(rows_per_load) {
            b_loads.push(BLoad { first_reg: 4 + seg * 4 * seg_regs + q0 * seg_regs, first_row: q0, rows: rows_per_load });
        }
    }
    let seg_of = |ld: &BLoad| (ld.first_reg - 4) / (4 * seg_regs);

    let issue_b = |m: &mut MachineState, ld: &BLoad, step: usize| -> Result<(), IsaError> {
        let u = step * 4 + ld.first_row;
        match task.b {
            BSource::Packed { panel, col_offset } => {
                let addr = panel + geom.b_unit_offset(task.kcu, u, col_offset + seg_of(ld) * geom.b_seg_cols());
                m.ld_span(mem, addr, ld.first_reg, 4, ew, lanes4, max_group)
            }
            BSource::Strided { addr, ld: ldb, k_rows } => {
                if u < k_rows {
                    let row = addr + (u * ldb * ub) as u64;
                    m.ld_span(mem, row, ld.first_reg, 4, ew, task.c.cols, max_group)
                } else {
                    (ld.first_reg..ld.first_reg + 4).try_for_each(|r| m.zero_reg(r))
                }
            }
        }
    };
    let a_bufs = [0usize, C_STAGE];
    let load_a = |m: &mut MachineState, step: usize, reg: usize| -> Result<(), IsaError> {
        let addr = task.a_panel + (step * 4 * t * ub) as u64;
        m.ld_span(mem, addr, reg, 4, ew, lanes4, max_group)
    };

    let pa = unit_pred(m, geom, task.c.rows, t);
    let pb: Vec<Option<PredicateReg>> =
        (0..4).map(|i| unit_pred(m, geom, task.c.cols.saturating_sub(i * t).min(t), t)).collect();

    let steps = task.kcu / 4;
    load_a(m, 0, a_bufs[0])?;
    for ld in &b_loads {
        issue_b(m, ld, 0)?;
    }
    for step in 0..steps {
        let cur = a_bufs[step % 2];
        let next = step + 1 < steps;
        if next {
            load_a(m, step + 1, a_bufs[(step + 1) % 2])?;
        }
        for q in 0..4 {
            for (i, tile) in tiles.iter().enumerate() {
                mopa(m, task.precision, *tile, cur + q, reg_of(q, i), pa.as_ref(), pb[i].as_ref())?;
            }
            if next {
                for ld in b_loads.iter().filter(|ld| ld.first_row + ld.rows - 1 == q) {
                    issue_b(m, ld, step + 1)?;
                }
            }
        }
    }
    Ok(())
}

fn edge_loop(
    m: &mut MachineState,
    mem: &MemoryImage,
    task: &MicroTask,
    geom: &PanelGeometry,
    tiles: &[TileView],
    max_group: usize,
) -> Result<(), IsaError> {
    let t = geom.panel_rows();
    let ub = geom.unit_bytes();
    let ew = geom.elem_bits();
    let vl = m.vl_bytes();
    let lanes = vl * 8 / ew;
    let b_reg = 16;

    let rows_of = |i: usize| task.c.rows.saturating_sub(i * t).min(t);
    let pa: Vec<Option<PredicateReg>> = (0..4).map(|i| unit_pred(m, geom, rows_of(i), t)).collect();
    let pb = unit_pred(m, geom, task.c.cols, t);

    for step in 0..task.kcu / 4 {
        for i in 0..4 {
            if rows_of(i) == 0 {
                (4 * i..4 * i + 4).try_for_each(|r| m.zero_reg(r))?;
                continue;
            }
            let addr = task.a_panel + i as u64 * task.a_panel_stride + (step * 4 * t * ub) as u64;
            m.ld_span(mem, addr, 4 * i, 4, ew, 4 * lanes, max_group)?;
        }
        for q in 0..4 {
            let u = step * 4 + q;
            match task.b {
                BSource::Packed { panel, col_offset } => {
                    let addr = panel + geom.b_unit_offset(task.kcu, u, col_offset);
                    m.ld_span(mem, addr, b_reg + q, 1, ew, lanes, max_group)?;
                }
                BSource::Strided { addr, ld, k_rows } => {
                    if u < k_rows {
                        m.ld_span(mem, addr + (u * ld * ub) as u64, b_reg + q, 1, ew, task.c.cols, max_group)?;
                    } else {
                        m.zero_reg(b_reg + q)?;
                    }
                }
            }
        }
        for q in 0..4 {
            for (i, tile) in tiles.iter().enumerate() {
                mopa(m, task.precision, *tile, 4 * i + q, b_reg + q, pa[i].as_ref(), pb.as_ref())?;
            }
        }
    }
    Ok(())
}
