//! Blocked GEMM driver: `C = alpha * A * B + beta * C` over simulated memory.
//!
//! Loop nest (outermost first): columns of C in `nc` blocks, K in `kc`
//! blocks, rows of C in `mc` blocks (A packed here), then `mr` row panels
//! and `nr` column panels calling the micro-kernels. B is packed once per
//! (`nc`, `kc`) block, either up front or lazily during the first sweep
//! over the row panels. `beta` applies on the first K block only.
//!
//! Column-major problems run as the row-major problem `C^T = B^T A^T` on
//! the same storage, so the kernels only ever see row-major operands.
//!
//! With more than one unit, (row block, column block) pairs form a work
//! queue; each worker owns a machine, a private cache hierarchy and its own
//! packing buffers, and writes a disjoint block of C.

mod exec;
mod report;
mod schedule;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtype::{Layout, PrecisionPair};
use crate::matrix::{HostMatrix, MatrixView};
use crate::memsim::{MemError, MemoryImage, SystemProfile};
use crate::packing::PanelGeometry;
use crate::tiling::{self, PlanError, TilingParams};
use crate::vsme::IsaError;

pub use report::{RunReport, TaskRecord};
pub use schedule::task_queue;

#[derive(Debug, Error)]
pub enum GemmError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("C overlaps an input matrix")]
    Overlap,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error(transparent)]
    Mem(#[from] MemError),
}

/// Switches for the optimization breakdown. All on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Cache-aware `mc`/`nc`/`kc` blocking with both operands packed. When
    /// off, the whole problem is one block and B is read in place where
    /// the kernel allows it (f32/f64).
    pub blocking: bool,
    /// Four-register loads and stores (off: single-register transfers).
    pub four_way: bool,
    /// Pack B during the first sweep over row panels instead of up front.
    pub online_pack: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation { blocking: true, four_way: true, online_pack: true }
    }
}

impl Ablation {
    pub const BASELINE: Ablation = Ablation { blocking: false, four_way: false, online_pack: false };

    pub fn max_group(&self) -> usize {
        if self.four_way {
            4
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemmConfig {
    pub precision: PrecisionPair,
    pub alpha: f64,
    pub beta: f64,
    pub layout: Layout,
    pub units: usize,
    pub ablation: Ablation,
    /// Replaces the planner output (in the caller's layout orientation).
    pub tiling: Option<TilingParams>,
    /// Shuffle the parallel work queue with this seed.
    pub queue_seed: Option<u64>,
    /// Record up to this many instructions of unit 0.
    pub trace_limit: Option<usize>,
}

impl GemmConfig {
    pub fn new(precision: PrecisionPair) -> Self {
        GemmConfig {
            precision,
            alpha: 1.0,
            beta: 0.0,
            layout: Layout::Row,
            units: 1,
            ablation: Ablation::default(),
            tiling: None,
            queue_seed: None,
            trace_limit: None,
        }
    }
}

/// Block sizes actually used, in the orientation of the row-major problem
/// the kernels see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedTiling {
    /// Planner output (or override) in the caller's orientation.
    pub planned: TilingParams,
    pub mc: usize,
    pub nc: usize,
    pub kc: usize,
    pub mr: usize,
    pub nr: usize,
    pub transposed: bool,
}

impl ResolvedTiling {
    /// Sizes of the successive K blocks.
    pub fn k_blocks(&self, k: usize) -> Vec<usize> {
        (0..k).step_by(self.kc).map(|pc| self.kc.min(k - pc)).collect()
    }
}

/// Planner view of a system profile for a precision pair. Block footprints
/// are sized by the output element, which bounds every packed unit.
pub fn planner_profile(profile: &SystemProfile, precision: PrecisionPair) -> tiling::HardwareProfile {
    profile.hardware_profile(precision.output().bytes())
}

/// Pick block sizes for an `m x n x k` problem (caller orientation).
pub fn resolve_tiling(
    cfg: &GemmConfig,
    profile: &SystemProfile,
    m: usize,
    n: usize,
    k: usize,
) -> Result<ResolvedTiling, GemmError> {
    let hw = planner_profile(profile, cfg.precision);
    let planned = match cfg.tiling {
        Some(t) => {
            let (mr, nr) = tiling::micro_tile_shape(cfg.precision, profile.svl_bits, cfg.layout);
            if (t.mr, t.nr, t.k_unit) != (mr, nr, cfg.precision.k_unit()) {
                return Err(GemmError::Config(format!(
                    "tiling override must use mr={mr} nr={nr} k_unit={}",
                    cfg.precision.k_unit()
                )));
            }
            if t.mc == 0 || t.nc == 0 || t.kc == 0 || t.mc % mr != 0 || t.nc % nr != 0 || t.kc % t.k_unit != 0 {
                return Err(GemmError::Config(format!("tiling override {t} is not on the block grid")));
            }
            t
        }
        None => tiling::plan(&hw, cfg.precision, cfg.layout)?.params,
    };
    let transposed = cfg.layout == Layout::Col;
    // Row-major problem dimensions and block sizes.
    let (pm, pn) = if transposed { (n, m) } else { (m, n) };
    let (mc, nc, mr, nr) = if transposed {
        (planned.nc, planned.mc, planned.nr, planned.mr)
    } else {
        (planned.mc, planned.nc, planned.mr, planned.nr)
    };
    let ku = planned.k_unit;
    let round = |x: usize, u: usize| x.max(1).div_ceil(u) * u;
    let (mc, nc, kc) = if cfg.ablation.blocking {
        (mc.min(round(pm, mr)), nc.min(round(pn, nr)), planned.kc.min(round(k, ku)))
    } else {
        (round(pm, mr), round(pn, nr), round(k, ku))
    };
    Ok(ResolvedTiling { planned, mc, nc, kc, mr, nr, transposed })
}

/// Bytes of packing buffers one unit needs.
pub fn unit_workspace_bytes(cfg: &GemmConfig, profile: &SystemProfile, t: &ResolvedTiling) -> u64 {
    let geom = PanelGeometry::new(cfg.precision, profile.svl_bits);
    let kcu = geom.kcu_for(t.kc);
    geom.ac_bytes(t.mc, kcu) + geom.bc_bytes(t.nc, kcu) + 2 * crate::memsim::DEFAULT_ALIGN
}

/// Memory capacity sufficient for the operands plus all units' buffers.
pub fn required_capacity(
    cfg: &GemmConfig,
    profile: &SystemProfile,
    m: usize,
    n: usize,
    k: usize,
) -> Result<u64, GemmError> {
    let t = resolve_tiling(cfg, profile, m, n, k)?;
    let p = cfg.precision;
    let operands = (m * k + k * n) as u64 * p.input().bytes() as u64 + (m * n) as u64 * p.output().bytes() as u64;
    Ok(operands + 4 * crate::memsim::DEFAULT_ALIGN + cfg.units.max(1) as u64 * unit_workspace_bytes(cfg, profile, &t))
}

fn check_operands(cfg: &GemmConfig, a: &MatrixView, b: &MatrixView, c: &MatrixView) -> Result<(), GemmError> {
    let p = cfg.precision;
    if a.dtype != p.input() || b.dtype != p.input() || c.dtype != p.output() {
        return Err(GemmError::Shape(format!(
            "{p} needs {:?} inputs and {:?} output, got {:?}, {:?}, {:?}",
            p.input(),
            p.output(),
            a.dtype,
            b.dtype,
            c.dtype
        )));
    }
    if a.rows != c.rows || b.cols != c.cols || a.cols != b.rows {
        return Err(GemmError::Shape(format!(
            "A is {}x{}, B is {}x{}, C is {}x{}",
            a.rows, a.cols, b.rows, b.cols, c.rows, c.cols
        )));
    }
    if a.rows == 0 || b.cols == 0 || a.cols == 0 {
        return Err(GemmError::Shape("all dimensions must be positive".into()));
    }
    if [a.layout, b.layout, c.layout].iter().any(|&l| l != cfg.layout) {
        return Err(GemmError::Shape(format!("all operands must be {}", cfg.layout)));
    }
    if cfg.units == 0 {
        return Err(GemmError::Config("unit count must be at least 1".into()));
    }
    if !cfg.alpha.is_finite() || !cfg.beta.is_finite() {
        return Err(GemmError::Config("alpha and beta must be finite".into()));
    }
    let overlaps = |x: &MatrixView| x.base < c.base + c.span_bytes() && c.base < x.base + x.span_bytes();
    if overlaps(a) || overlaps(b) {
        return Err(GemmError::Overlap);
    }
    // Integer scale factors are validated here rather than mid-run.
    crate::kernels::accumulator_scalar(p, cfg.alpha)?;
    crate::kernels::accumulator_scalar(p, cfg.beta)?;
    Ok(())
}

/// Run the GEMM on operands already placed in `mem`. Packing buffers are
/// allocated from `mem`; size it with [`required_capacity`].
pub fn gemm(
    mem: &mut MemoryImage,
    cfg: &GemmConfig,
    a: &MatrixView,
    b: &MatrixView,
    c: &MatrixView,
    profile: &SystemProfile,
) -> Result<RunReport, GemmError> {
    profile.validate()?;
    check_operands(cfg, a, b, c)?;
    let tiling = resolve_tiling(cfg, profile, a.rows, b.cols, a.cols)?;
    let (pa, pb, pc) = if tiling.transposed { (b.transposed(), a.transposed(), c.transposed()) } else { (*a, *b, *c) };
    exec::run(mem, cfg, profile, &tiling, &pa, &pb, &pc, (a.rows, b.cols, a.cols))
}

/// Row-major host operands of one GEMM.
#[derive(Debug, Clone)]
pub struct HostProblem {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub a: HostMatrix,
    pub b: HostMatrix,
    pub c: HostMatrix,
}

/// Place the operands in a fresh memory image (in `cfg.layout`), run the
/// GEMM and read C back in row-major order.
pub fn gemm_host(cfg: &GemmConfig, profile: &SystemProfile, p: &HostProblem) -> Result<(HostMatrix, RunReport), GemmError> {
    let (m, n, k) = (p.m, p.n, p.k);
    if p.a.len() != m * k || p.b.len() != k * n || p.c.len() != m * n {
        return Err(GemmError::Shape(format!("host buffers do not match {m}x{n}x{k}")));
    }
    let mut mem = MemoryImage::new(required_capacity(cfg, profile, m, n, k)?);
    let a = p.a.store(&mut mem, "A", m, k, cfg.layout)?;
    let b = p.b.store(&mut mem, "B", k, n, cfg.layout)?;
    let c = p.c.store(&mut mem, "C", m, n, cfg.layout)?;
    let report = gemm(&mut mem, cfg, &a, &b, &c, profile)?;
    Ok((HostMatrix::load(&mem, &c)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_scalar(alpha: f64, beta: f64) -> f32 {
        let profile = SystemProfile::default();
        let cfg = GemmConfig { alpha, beta, ..GemmConfig::new(PrecisionPair::F32) };
        let mut mem = MemoryImage::new(required_capacity(&cfg, &profile, 1, 1, 1).unwrap());
        let a = HostMatrix::F32(vec![3.0]).store(&mut mem, "a", 1, 1, Layout::Row).unwrap();
        let b = HostMatrix::F32(vec![4.0]).store(&mut mem, "b", 1, 1, Layout::Row).unwrap();
        let c = HostMatrix::F32(vec![5.0]).store(&mut mem, "c", 1, 1, Layout::Row).unwrap();
        gemm(&mut mem, &cfg, &a, &b, &c, &profile).unwrap();
        mem.read_lanes::<f32>(c.base, 1).unwrap()[0]
    }

    #[test]
    fn one_by_one() {
        assert_eq!(run_scalar(2.0, 1.0), 29.0);
        assert_eq!(run_scalar(1.0, 1.0), 17.0);
        assert_eq!(run_scalar(0.0, 3.0), 15.0);
    }

    #[test]
    fn rejects_bad_operands() {
        let profile = SystemProfile::default();
        let cfg = GemmConfig::new(PrecisionPair::F32);
        let mut mem = MemoryImage::new(1 << 20);
        let a = HostMatrix::F32(vec![0.0; 6]).store(&mut mem, "a", 2, 3, Layout::Row).unwrap();
        let b = HostMatrix::F32(vec![0.0; 6]).store(&mut mem, "b", 2, 3, Layout::Row).unwrap();
        let c = HostMatrix::F32(vec![0.0; 9]).store(&mut mem, "c", 3, 3, Layout::Row).unwrap();
        assert!(matches!(gemm(&mut mem, &cfg, &a, &b, &c, &profile), Err(GemmError::Shape(_))));
        let b = HostMatrix::F32(vec![0.0; 9]).store(&mut mem, "b2", 3, 3, Layout::Row).unwrap();
        let c2 = MatrixView { rows: 2, ..b };
        assert!(matches!(gemm(&mut mem, &cfg, &a, &b, &c2, &profile), Err(GemmError::Overlap)));
        let icfg = GemmConfig { alpha: 0.5, ..GemmConfig::new(PrecisionPair::I8I32) };
        let ai = HostMatrix::I8(vec![0; 4]).store(&mut mem, "ai", 2, 2, Layout::Row).unwrap();
        let bi = HostMatrix::I8(vec![0; 4]).store(&mut mem, "bi", 2, 2, Layout::Row).unwrap();
        let ci = HostMatrix::I32(vec![0; 4]).store(&mut mem, "ci", 2, 2, Layout::Row).unwrap();
        assert!(matches!(gemm(&mut mem, &icfg, &ai, &bi, &ci, &profile), Err(GemmError::Isa(_))));
    }

    #[test]
    fn column_major_tiling_is_swapped() {
        let profile = SystemProfile::default();
        let cfg = GemmConfig { layout: Layout::Col, ..GemmConfig::new(PrecisionPair::F32) };
        let t = resolve_tiling(&cfg, &profile, 300, 200, 100).unwrap();
        assert_eq!((t.planned.mr, t.planned.nr), (64, 16));
        assert_eq!((t.mr, t.nr), (16, 64));
        assert!(t.transposed);
        assert_eq!(t.kc, 112);
        assert_eq!(t.k_blocks(100), vec![100]);
    }
}
