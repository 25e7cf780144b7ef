//! Functional model of one SME unit: Z registers, predicates, the ZA array
//! and the instruction subset used by the packing routines and kernels.
//!
//! ZA is stored as `vl` row vectors of `vl` bytes (`vl = svl_bits / 8`).
//! A tile of element width `w` bytes has `w` instances; horizontal slice `s`
//! of tile `t` is ZA row vector `s * w + t`, so tiles of one width interleave
//! row by row and views of different widths alias the same bytes.
//!
//! All floating-point arithmetic is plain IEEE-754 binary32/binary64 with
//! round-to-nearest-even after every multiply and every add (no fused
//! operations). Widening outer products sum each lane group first and then
//! add the group sum to the accumulator. Hardware leaves that order
//! unspecified; this model fixes it so results are reproducible bit for bit.

mod stats;

use std::fmt::Write as _;

use half::{bf16, f16};
use thiserror::Error;

use crate::dtype::Lane;
use crate::memsim::{AccessKind, CacheHierarchy, MemError, MemStats, MemoryImage};

pub use stats::InstrStats;

pub const NUM_ZREGS: usize = 32;
pub const NUM_PREGS: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IsaError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Fault(#[from] MemError),
}

fn usage<T>(msg: impl Into<String>) -> Result<T, IsaError> {
    Err(IsaError::Usage(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineConfig {
    pub svl_bits: usize,
    pub unit_id: usize,
}

impl MachineConfig {
    pub fn new(svl_bits: usize, unit_id: usize) -> Result<Self, IsaError> {
        if svl_bits < 128 || !svl_bits.is_power_of_two() {
            return usage(format!("svl_bits {svl_bits} must be a power of two >= 128"));
        }
        Ok(MachineConfig { svl_bits, unit_id })
    }

    pub fn vl_bytes(&self) -> usize {
        self.svl_bits / 8
    }
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig { svl_bits: 512, unit_id: 0 }
    }
}

/// One boolean per byte granule; lane `k` at element width `w` bits is
/// governed by granule `k * w / 8`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateReg {
    mask: Vec<bool>,
}

impl PredicateReg {
    pub fn all(vl_bytes: usize) -> Self {
        PredicateReg { mask: vec![true; vl_bytes] }
    }

    pub fn none(vl_bytes: usize) -> Self {
        PredicateReg { mask: vec![false; vl_bytes] }
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        PredicateReg { mask }
    }

    /// Build a predicate with the given per-lane activity at `width_bits`.
    pub fn from_lanes(vl_bytes: usize, width_bits: usize, lanes: &[bool]) -> Self {
        let eb = width_bits / 8;
        let mut mask = vec![false; vl_bytes];
        for (k, &on) in lanes.iter().enumerate().take(vl_bytes / eb) {
            mask[k * eb] = on;
        }
        PredicateReg { mask }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn lane_active(&self, lane: usize, width_bits: usize) -> bool {
        self.mask.get(lane * width_bits / 8).copied().unwrap_or(false)
    }

    pub fn active_lanes(&self, width_bits: usize) -> usize {
        let lanes = self.mask.len() * 8 / width_bits;
        (0..lanes).filter(|&k| self.lane_active(k, width_bits)).count()
    }
}

/// Governing predicate of a (multi-register) load or store.
#[derive(Debug, Clone, Copy)]
pub enum Governing<'a> {
    All,
    /// The same predicate register applied to every register of the group.
    Mask(&'a PredicateReg),
    /// Predicate-as-counter: the first `n` elements across the group are active.
    Count(usize),
}

impl Governing<'_> {
    #[inline]
    fn active(&self, global_lane: usize, lanes_per_reg: usize, width_bits: usize) -> bool {
        match *self {
            Governing::All => true,
            Governing::Mask(p) => p.lane_active(global_lane % lanes_per_reg, width_bits),
            Governing::Count(n) => global_lane < n,
        }
    }
}

/// A ZA tile at a given element width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileView {
    width_bits: usize,
    index: usize,
}

impl TileView {
    pub fn new(width_bits: usize, index: usize) -> Result<Self, IsaError> {
        if !matches!(width_bits, 8 | 16 | 32 | 64 | 128) {
            return usage(format!("unsupported tile element width {width_bits}"));
        }
        let count = Self::count_for(width_bits);
        if index >= count {
            return usage(format!("tile index {index} out of range for {width_bits}-bit tiles ({count} tiles)"));
        }
        Ok(TileView { width_bits, index })
    }

    /// Number of tiles of the given element width (one per element byte).
    pub const fn count_for(width_bits: usize) -> usize {
        width_bits / 8
    }

    /// Side length of a square tile of `width_bits` elements.
    pub const fn side_for(width_bits: usize, svl_bits: usize) -> usize {
        svl_bits / width_bits
    }

    pub fn b() -> Self {
        TileView { width_bits: 8, index: 0 }
    }

    pub fn h(index: usize) -> Self {
        Self::new(16, index).expect("valid .H tile")
    }

    pub fn s(index: usize) -> Self {
        Self::new(32, index).expect("valid .S tile")
    }

    pub fn d(index: usize) -> Self {
        Self::new(64, index).expect("valid .D tile")
    }

    pub fn q(index: usize) -> Self {
        Self::new(128, index).expect("valid .Q tile")
    }

    pub fn width_bits(&self) -> usize {
        self.width_bits
    }

    pub fn index(&self) -> usize {
        self.index
    }

    fn elem_bytes(&self) -> usize {
        self.width_bits / 8
    }

    fn suffix(&self) -> &'static str {
        width_suffix(self.width_bits)
    }
}

fn width_suffix(width_bits: usize) -> &'static str {
    match width_bits {
        8 => "b",
        16 => "h",
        32 => "s",
        64 => "d",
        _ => "q",
    }
}

fn width_class(width_bits: usize) -> usize {
    match width_bits {
        8 => 0,
        16 => 1,
        32 => 2,
        64 => 3,
        _ => 4,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MovaDirection {
    TileToReg,
    RegToTile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmopaPrecision {
    F32,
    F64,
    /// Pairs of f16 lanes widened into f32 accumulators.
    F16Widen,
    /// Same as `F16Widen` with bfloat16 lane decoding.
    Bf16Widen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmopaPrecision {
    /// Quads of i8 lanes into i32 accumulators.
    I8Widen,
    /// Pairs of i16 lanes into i32 accumulators.
    I16Widen32,
    /// Quads of i16 lanes into i64 accumulators.
    I16Widen64,
}

/// Element interpretation for the simple vector ALU ops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    F32(f32),
    F64(f64),
    I32(i32),
}

impl Scalar {
    fn width_bits(&self) -> usize {
        match self {
            Scalar::F64(_) => 64,
            _ => 32,
        }
    }
}

/// Which kind of micro-kernel a `begin_kernel`/`end_kernel` bracket covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelClass {
    Main,
    Edge,
}

#[derive(Debug, Clone, Default)]
struct Trace {
    lines: Vec<String>,
    limit: usize,
    dropped: u64,
}

/// Register file, ZA array, event counters and memory hierarchy of one unit.
#[derive(Debug, Clone)]
pub struct MachineState {
    cfg: MachineConfig,
    vl: usize,
    z: Vec<u8>,
    za: Vec<u8>,
    stats: InstrStats,
    hier: CacheHierarchy,
    touched: [u32; 5],
    edge: bool,
    trace: Option<Trace>,
}

impl MachineState {
    pub fn new(cfg: MachineConfig, hier: CacheHierarchy) -> Self {
        let vl = cfg.vl_bytes();
        MachineState {
            cfg,
            vl,
            z: vec![0; NUM_ZREGS * vl],
            za: vec![0; vl * vl],
            stats: InstrStats::default(),
            hier,
            touched: [0; 5],
            edge: false,
            trace: None,
        }
    }

    /// A 512-bit machine with the default cache hierarchy.
    pub fn with_defaults() -> Self {
        Self::new(MachineConfig::default(), CacheHierarchy::default())
    }

    pub fn config(&self) -> &MachineConfig {
        &self.cfg
    }

    pub fn vl_bytes(&self) -> usize {
        self.vl
    }

    pub fn svl_bits(&self) -> usize {
        self.cfg.svl_bits
    }

    /// Lanes per register at `width_bits`.
    pub fn lanes(&self, width_bits: usize) -> usize {
        self.cfg.svl_bits / width_bits
    }

    pub fn stats(&self) -> &InstrStats {
        &self.stats
    }

    pub fn take_stats(&mut self) -> InstrStats {
        std::mem::take(&mut self.stats)
    }

    pub fn mem_stats(&self) -> MemStats {
        self.hier.snapshot()
    }

    pub fn hierarchy(&self) -> &CacheHierarchy {
        &self.hier
    }

    pub fn hierarchy_mut(&mut self) -> &mut CacheHierarchy {
        &mut self.hier
    }

    /// Loads issued while edge scope is set are additionally counted as edge loads.
    pub fn set_edge_scope(&mut self, edge: bool) {
        self.edge = edge;
    }

    pub fn edge_scope(&self) -> bool {
        self.edge
    }

    pub fn enable_trace(&mut self, limit: usize) {
        self.trace = Some(Trace { limit, ..Default::default() });
    }

    /// Recorded trace lines and the number of lines dropped past the limit.
    pub fn take_trace(&mut self) -> (Vec<String>, u64) {
        match self.trace.as_mut() {
            Some(t) => (std::mem::take(&mut t.lines), std::mem::take(&mut t.dropped)),
            None => (Vec::new(), 0),
        }
    }

    fn emit(&mut self, f: impl FnOnce() -> String) {
        if let Some(t) = self.trace.as_mut() {
            if t.lines.len() < t.limit {
                t.lines.push(f());
            } else {
                t.dropped += 1;
            }
        }
    }

    fn touch(&mut self, tile: TileView) {
        self.touched[width_class(tile.width_bits)] |= 1 << tile.index;
    }

    pub fn begin_kernel(&mut self) {
        self.touched = [0; 5];
    }

    /// Close a kernel bracket and record how many distinct tiles of the
    /// accumulator width it touched.
    pub fn end_kernel(&mut self, class: KernelClass, acc_width_bits: usize) -> usize {
        let n = self.touched[width_class(acc_width_bits)].count_ones() as usize;
        self.stats.tiles_touched_hist[n.min(16)] += 1;
        match class {
            KernelClass::Main => self.stats.main_kernels += 1,
            KernelClass::Edge => self.stats.edge_kernels += 1,
        }
        n
    }

    fn check_reg(&self, r: usize) -> Result<(), IsaError> {
        if r >= NUM_ZREGS {
            return usage(format!("register z{r} does not exist"));
        }
        Ok(())
    }

    pub fn z(&self, r: usize) -> &[u8] {
        &self.z[r * self.vl..(r + 1) * self.vl]
    }

    fn z_mut(&mut self, r: usize) -> &mut [u8] {
        &mut self.z[r * self.vl..(r + 1) * self.vl]
    }

    pub fn z_lanes<T: Lane>(&self, r: usize) -> Vec<T> {
        crate::dtype::decode_lanes(self.z(r))
    }

    /// Overwrite the leading lanes of a register (remaining bytes unchanged).
    pub fn set_z_lanes<T: Lane>(&mut self, r: usize, values: &[T]) {
        let bytes = crate::dtype::encode_lanes(values);
        let n = bytes.len().min(self.vl);
        self.z_mut(r)[..n].copy_from_slice(&bytes[..n]);
    }

    /// Overwrite the leading bytes of a register.
    pub fn set_z_bytes(&mut self, r: usize, bytes: &[u8]) {
        let n = bytes.len().min(self.vl);
        self.z_mut(r)[..n].copy_from_slice(&bytes[..n]);
    }

    pub fn za_bytes(&self) -> &[u8] {
        &self.za
    }

    fn za_offset(&self, tile: TileView, row: usize, col: usize) -> usize {
        let eb = tile.elem_bytes();
        (row * eb + tile.index) * self.vl + col * eb
    }

    pub fn tile_element<T: Lane>(&self, tile: TileView, row: usize, col: usize) -> T {
        T::read_le(&self.za[self.za_offset(tile, row, col)..])
    }

    pub fn set_tile_element<T: Lane>(&mut self, tile: TileView, row: usize, col: usize, v: T) {
        let off = self.za_offset(tile, row, col);
        v.write_le(&mut self.za[off..]);
    }

    /// Whole tile as row-major lanes.
    pub fn tile_lanes<T: Lane>(&self, tile: TileView) -> Vec<T> {
        let side = TileView::side_for(tile.width_bits, self.cfg.svl_bits);
        let mut out = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                out.push(self.tile_element(tile, i, j));
            }
        }
        out
    }

    fn check_width(width_bits: usize) -> Result<(), IsaError> {
        if !matches!(width_bits, 8 | 16 | 32 | 64) {
            return usage(format!("unsupported element width {width_bits}"));
        }
        Ok(())
    }

    fn check_group(&self, group: usize, first_reg: usize) -> Result<(), IsaError> {
        if !matches!(group, 1 | 2 | 4) {
            return usage(format!("register group size {group} is not 1, 2 or 4"));
        }
        if first_reg + group > NUM_ZREGS {
            return usage(format!("register group z{first_reg}+{group} exceeds z31"));
        }
        Ok(())
    }

    /// Maximal runs of consecutive active lanes across a register group.
    fn active_runs(&self, group: usize, width_bits: usize, gov: Governing) -> Vec<(usize, usize)> {
        let lanes = self.lanes(width_bits);
        let total = group * lanes;
        match gov {
            Governing::All => vec![(0, total)],
            Governing::Count(n) => {
                if n == 0 {
                    Vec::new()
                } else {
                    vec![(0, n.min(total))]
                }
            }
            Governing::Mask(_) => {
                let mut runs = Vec::new();
                let mut start = None;
                for g in 0..total {
                    match (gov.active(g, lanes, width_bits), start) {
                        (true, None) => start = Some(g),
                        (false, Some(s)) => {
                            runs.push((s, g));
                            start = None;
                        }
                        _ => {}
                    }
                }
                if let Some(s) = start {
                    runs.push((s, total));
                }
                runs
            }
        }
    }

    /// Contiguous load into `group` consecutive registers (LD1B/H/W/D with a
    /// 1-, 2- or 4-register list). Inactive lanes are zeroed and never
    /// touch memory.
    pub fn ld_multi(
        &mut self,
        mem: &MemoryImage,
        base: u64,
        group: usize,
        first_reg: usize,
        width_bits: usize,
        gov: Governing,
    ) -> Result<(), IsaError> {
        Self::check_width(width_bits)?;
        self.check_group(group, first_reg)?;
        let eb = width_bits / 8;
        let runs = self.active_runs(group, width_bits, gov);
        for &(s, e) in &runs {
            mem.check(base + (s * eb) as u64, ((e - s) * eb) as u64)?;
        }
        let mut buf = vec![0u8; group * self.vl];
        let mut active = 0;
        for &(s, e) in &runs {
            let addr = base + (s * eb) as u64;
            let len = ((e - s) * eb) as u64;
            mem.read(addr, &mut buf[s * eb..e * eb])?;
            self.hier.access(addr, len, AccessKind::Read);
            active += e - s;
        }
        self.z[first_reg * self.vl..(first_reg + group) * self.vl].copy_from_slice(&buf);
        let gi = stats::group_index(group);
        self.stats.loads_by_group[gi] += 1;
        if self.edge {
            self.stats.edge_loads_by_group[gi] += 1;
        }
        self.stats.bytes_loaded += (active * eb) as u64;
        self.emit(|| {
            format!(
                "ld1{} {{z{}-z{}}}, {}, [{base:#x}]",
                width_suffix(width_bits),
                first_reg,
                first_reg + group - 1,
                gov_text(gov)
            )
        });
        Ok(())
    }

    /// Contiguous store of `group` consecutive registers; inactive lanes
    /// leave memory unchanged.
    pub fn st_multi(
        &mut self,
        mem: &MemoryImage,
        base: u64,
        group: usize,
        first_reg: usize,
        width_bits: usize,
        gov: Governing,
    ) -> Result<(), IsaError> {
        Self::check_width(width_bits)?;
        self.check_group(group, first_reg)?;
        let eb = width_bits / 8;
        let runs = self.active_runs(group, width_bits, gov);
        for &(s, e) in &runs {
            mem.check(base + (s * eb) as u64, ((e - s) * eb) as u64)?;
        }
        let src = first_reg * self.vl;
        let mut active = 0;
        for &(s, e) in &runs {
            let addr = base + (s * eb) as u64;
            mem.write(addr, &self.z[src + s * eb..src + e * eb])?;
            self.hier.access(addr, ((e - s) * eb) as u64, AccessKind::Write);
            active += e - s;
        }
        self.stats.stores_by_group[stats::group_index(group)] += 1;
        self.stats.bytes_stored += (active * eb) as u64;
        self.emit(|| {
            format!(
                "st1{} {{z{}-z{}}}, {}, [{base:#x}]",
                width_suffix(width_bits),
                first_reg,
                first_reg + group - 1,
                gov_text(gov)
            )
        });
        Ok(())
    }

    /// Load `nregs` registers from contiguous memory with the first `active`
    /// elements live, issued as loads of at most `max_group` registers.
    /// Groups with no live element are zeroed without touching memory.
    #[allow(clippy::too_many_arguments)]
    pub fn ld_span(
        &mut self,
        mem: &MemoryImage,
        base: u64,
        first_reg: usize,
        nregs: usize,
        width_bits: usize,
        active: usize,
        max_group: usize,
    ) -> Result<(), IsaError> {
        let lanes = self.lanes(width_bits);
        let group = max_group.min(nregs);
        for g in (0..nregs).step_by(group) {
            let done = g * lanes;
            let live = active.saturating_sub(done).min(group * lanes);
            if live == 0 {
                for r in first_reg + g..first_reg + g + group {
                    self.zero_reg(r)?;
                }
                continue;
            }
            let gov = if live == group * lanes { Governing::All } else { Governing::Count(live) };
            self.ld_multi(mem, base + (done * width_bits / 8) as u64, group, first_reg + g, width_bits, gov)?;
        }
        Ok(())
    }

    /// Store counterpart of [`MachineState::ld_span`]; groups with no live
    /// element are skipped.
    #[allow(clippy::too_many_arguments)]
    pub fn st_span(
        &mut self,
        mem: &MemoryImage,
        base: u64,
        first_reg: usize,
        nregs: usize,
        width_bits: usize,
        active: usize,
        max_group: usize,
    ) -> Result<(), IsaError> {
        let lanes = self.lanes(width_bits);
        let group = max_group.min(nregs);
        for g in (0..nregs).step_by(group) {
            let done = g * lanes;
            let live = active.saturating_sub(done).min(group * lanes);
            if live == 0 {
                continue;
            }
            let gov = if live == group * lanes { Governing::All } else { Governing::Count(live) };
            self.st_multi(mem, base + (done * width_bits / 8) as u64, group, first_reg + g, width_bits, gov)?;
        }
        Ok(())
    }

    fn pred_active(p: Option<&PredicateReg>, lane: usize, width_bits: usize) -> bool {
        p.is_none_or(|p| p.lane_active(lane, width_bits))
    }

    /// Floating-point outer product and accumulate into one tile.
    pub fn fmopa(
        &mut self,
        tile: TileView,
        a: usize,
        b: usize,
        pa: Option<&PredicateReg>,
        pb: Option<&PredicateReg>,
        precision: FmopaPrecision,
    ) -> Result<(), IsaError> {
        self.check_reg(a)?;
        self.check_reg(b)?;
        let want = match precision {
            FmopaPrecision::F64 => 64,
            _ => 32,
        };
        if tile.width_bits != want {
            return usage(format!("{precision:?} accumulates into {want}-bit tiles, got ZA{}.{}", tile.index, tile.suffix()));
        }
        let side = self.lanes(want);
        match precision {
            FmopaPrecision::F32 => {
                let av: Vec<f32> = self.z_lanes(a);
                let bv: Vec<f32> = self.z_lanes(b);
                self.outer_update(tile, side, 1, 32, pa, pb, |i, j, acc: f32| acc + av[i] * bv[j]);
                self.stats.fmopa_f32 += 1;
            }
            FmopaPrecision::F64 => {
                let av: Vec<f64> = self.z_lanes(a);
                let bv: Vec<f64> = self.z_lanes(b);
                self.outer_update(tile, side, 1, 64, pa, pb, |i, j, acc: f64| acc + av[i] * bv[j]);
                self.stats.fmopa_f64 += 1;
            }
            FmopaPrecision::F16Widen | FmopaPrecision::Bf16Widen => {
                let (av, bv): (Vec<f32>, Vec<f32>) = if precision == FmopaPrecision::F16Widen {
                    (
                        self.z_lanes::<f16>(a).into_iter().map(f32::from).collect(),
                        self.z_lanes::<f16>(b).into_iter().map(f32::from).collect(),
                    )
                } else {
                    (
                        self.z_lanes::<bf16>(a).into_iter().map(f32::from).collect(),
                        self.z_lanes::<bf16>(b).into_iter().map(f32::from).collect(),
                    )
                };
                self.widening_update(tile, side, 2, 16, pa, pb, |i, j, terms: [bool; 4], acc: f32| {
                    // Products of two 11- (or 8-) bit significands are exact in f32.
                    let mut sum: Option<f32> = None;
                    for t in 0..2 {
                        if terms[t] {
                            let p = av[2 * i + t] * bv[2 * j + t];
                            sum = Some(sum.map_or(p, |s| s + p));
                        }
                    }
                    sum.map(|s| acc + s)
                });
                if precision == FmopaPrecision::F16Widen {
                    self.stats.fmopa_f16w += 1;
                } else {
                    self.stats.fmopa_bf16w += 1;
                }
            }
        }
        let k = match precision {
            FmopaPrecision::F32 | FmopaPrecision::F64 => 1,
            _ => 2,
        };
        self.stats.flops += (2 * side * side * k) as u64;
        self.touch(tile);
        self.emit(|| format!("fmopa za{}.{}, {}, {}, z{a}, z{b}   ; {precision:?}", tile.index, tile.suffix(), pred_text(pa), pred_text(pb)));
        Ok(())
    }

    /// Signed integer outer product and accumulate (widening), wrapping on
    /// accumulator overflow.
    pub fn smopa(
        &mut self,
        tile: TileView,
        a: usize,
        b: usize,
        pa: Option<&PredicateReg>,
        pb: Option<&PredicateReg>,
        precision: SmopaPrecision,
    ) -> Result<(), IsaError> {
        self.check_reg(a)?;
        self.check_reg(b)?;
        let want = match precision {
            SmopaPrecision::I16Widen64 => 64,
            _ => 32,
        };
        if tile.width_bits != want {
            return usage(format!("{precision:?} accumulates into {want}-bit tiles, got ZA{}.{}", tile.index, tile.suffix()));
        }
        let side = self.lanes(want);
        let k = match precision {
            SmopaPrecision::I8Widen => {
                let av: Vec<i8> = self.z_lanes(a);
                let bv: Vec<i8> = self.z_lanes(b);
                self.widening_update(tile, side, 4, 8, pa, pb, |i, j, terms, acc: i32| {
                    let mut any = false;
                    let mut sum = 0i32;
                    for (t, &on) in terms.iter().enumerate() {
                        if on {
                            any = true;
                            sum += av[4 * i + t] as i32 * bv[4 * j + t] as i32;
                        }
                    }
                    any.then(|| acc.wrapping_add(sum))
                });
                self.stats.smopa_i8w += 1;
                4
            }
            SmopaPrecision::I16Widen32 => {
                let av: Vec<i16> = self.z_lanes(a);
                let bv: Vec<i16> = self.z_lanes(b);
                self.widening_update(tile, side, 2, 16, pa, pb, |i, j, terms, acc: i32| {
                    let mut any = false;
                    let mut sum = 0i32;
                    for (t, &on) in terms.iter().take(2).enumerate() {
                        if on {
                            any = true;
                            sum = sum.wrapping_add(av[2 * i + t] as i32 * bv[2 * j + t] as i32);
                        }
                    }
                    any.then(|| acc.wrapping_add(sum))
                });
                self.stats.smopa_i16w32 += 1;
                2
            }
            SmopaPrecision::I16Widen64 => {
                let av: Vec<i16> = self.z_lanes(a);
                let bv: Vec<i16> = self.z_lanes(b);
                self.widening_update(tile, side, 4, 16, pa, pb, |i, j, terms, acc: i64| {
                    let mut any = false;
                    let mut sum = 0i64;
                    for (t, &on) in terms.iter().enumerate() {
                        if on {
                            any = true;
                            sum += av[4 * i + t] as i64 * bv[4 * j + t] as i64;
                        }
                    }
                    any.then(|| acc.wrapping_add(sum))
                });
                self.stats.smopa_i16w64 += 1;
                4
            }
        };
        self.stats.flops += (2 * side * side * k) as u64;
        self.touch(tile);
        self.emit(|| format!("smopa za{}.{}, {}, {}, z{a}, z{b}   ; {precision:?}", tile.index, tile.suffix(), pred_text(pa), pred_text(pb)));
        Ok(())
    }

    /// Non-widening update: element (i, j) is written iff row lane i and
    /// column lane j are both active.
    #[allow(clippy::too_many_arguments)]
    fn outer_update<T: Lane>(
        &mut self,
        tile: TileView,
        side: usize,
        _group: usize,
        width_bits: usize,
        pa: Option<&PredicateReg>,
        pb: Option<&PredicateReg>,
        f: impl Fn(usize, usize, T) -> T,
    ) {
        let eb = width_bits / 8;
        let cols: Vec<usize> = (0..side).filter(|&j| Self::pred_active(pb, j, width_bits)).collect();
        for i in 0..side {
            if !Self::pred_active(pa, i, width_bits) {
                continue;
            }
            let row = (i * eb + tile.index) * self.vl;
            let bytes = &mut self.za[row..row + self.vl];
            for &j in &cols {
                let slot = &mut bytes[j * eb..(j + 1) * eb];
                f(i, j, T::read_le(slot)).write_le(slot);
            }
        }
    }

    /// Widening update over lane groups of `group` source elements of
    /// `src_width` bits. `f` receives which group members contribute (both
    /// source lanes active) and returns the new accumulator, or `None` to
    /// leave it unchanged.
    #[allow(clippy::too_many_arguments)]
    fn widening_update<T: Lane>(
        &mut self,
        tile: TileView,
        side: usize,
        group: usize,
        src_width: usize,
        pa: Option<&PredicateReg>,
        pb: Option<&PredicateReg>,
        f: impl Fn(usize, usize, [bool; 4], T) -> Option<T>,
    ) {
        let eb = T::BYTES;
        let act = |p: Option<&PredicateReg>, g: usize| -> [bool; 4] {
            std::array::from_fn(|t| t < group && Self::pred_active(p, g * group + t, src_width))
        };
        let col_act: Vec<[bool; 4]> = (0..side).map(|j| act(pb, j)).collect();
        for i in 0..side {
            let ra = act(pa, i);
            if !ra.iter().any(|&x| x) {
                continue;
            }
            let row = (i * eb + tile.index) * self.vl;
            let bytes = &mut self.za[row..row + self.vl];
            for (j, cb) in col_act.iter().enumerate() {
                if !cb.iter().any(|&x| x) {
                    continue;
                }
                let terms: [bool; 4] = std::array::from_fn(|t| ra[t] && cb[t]);
                let slot = &mut bytes[j * eb..(j + 1) * eb];
                if let Some(v) = f(i, j, terms, T::read_le(slot)) {
                    v.write_le(slot);
                }
            }
        }
    }

    /// Move one tile slice to or from a register. Inactive lanes of the
    /// destination are left unchanged.
    pub fn mova(
        &mut self,
        dir: MovaDirection,
        tile: TileView,
        slice: usize,
        orientation: Orientation,
        reg: usize,
        pred: Option<&PredicateReg>,
    ) -> Result<(), IsaError> {
        self.check_reg(reg)?;
        let eb = tile.elem_bytes();
        let side = self.vl / eb;
        if slice >= side {
            return usage(format!("slice {slice} out of range for ZA{}.{} (side {side})", tile.index, tile.suffix()));
        }
        for lane in 0..side {
            if !Self::pred_active(pred, lane, tile.width_bits) {
                continue;
            }
            let (row, col) = match orientation {
                Orientation::Horizontal => (slice, lane),
                Orientation::Vertical => (lane, slice),
            };
            let za_off = self.za_offset(tile, row, col);
            let z_off = reg * self.vl + lane * eb;
            match dir {
                MovaDirection::TileToReg => {
                    self.z[z_off..z_off + eb].copy_from_slice(&self.za[za_off..za_off + eb]);
                }
                MovaDirection::RegToTile => {
                    self.za[za_off..za_off + eb].copy_from_slice(&self.z[z_off..z_off + eb]);
                }
            }
        }
        self.stats.mova_slices += 1;
        self.touch(tile);
        self.emit(|| {
            let hv = if orientation == Orientation::Horizontal { "h" } else { "v" };
            let sl = format!("za{}{hv}.{}[{slice}]", tile.index, tile.suffix());
            match dir {
                MovaDirection::TileToReg => format!("mova z{reg}.{}, {}, {sl}", tile.suffix(), pred_text(pred)),
                MovaDirection::RegToTile => format!("mova {sl}, {}, z{reg}.{}", pred_text(pred), tile.suffix()),
            }
        });
        Ok(())
    }

    /// Interleave two registers: `dst_lo` receives the low halves of `a`
    /// and `b` lane by lane, `dst_hi` the high halves.
    pub fn zip(&mut self, dst_lo: usize, dst_hi: usize, a: usize, b: usize, width_bits: usize) -> Result<(), IsaError> {
        for r in [dst_lo, dst_hi, a, b] {
            self.check_reg(r)?;
        }
        if !matches!(width_bits, 8 | 16 | 32 | 64 | 128) {
            return usage(format!("unsupported zip width {width_bits}"));
        }
        if dst_lo == dst_hi {
            return usage("zip destinations must differ");
        }
        let eb = width_bits / 8;
        let half = self.vl / eb / 2;
        let av = self.z(a).to_vec();
        let bv = self.z(b).to_vec();
        for (dst, offset) in [(dst_lo, 0), (dst_hi, half)] {
            let out = self.z_mut(dst);
            for k in 0..half {
                let src = (offset + k) * eb;
                out[2 * k * eb..(2 * k + 1) * eb].copy_from_slice(&av[src..src + eb]);
                out[(2 * k + 1) * eb..(2 * k + 2) * eb].copy_from_slice(&bv[src..src + eb]);
            }
        }
        self.stats.zips += 1;
        self.emit(|| format!("zip {{z{dst_lo}.{s}, z{dst_hi}.{s}}}, z{a}.{s}, z{b}.{s}", s = width_suffix(width_bits)));
        Ok(())
    }

    /// Zero the listed tiles; every other ZA byte is untouched.
    pub fn zero_za(&mut self, tiles: &[TileView]) -> Result<(), IsaError> {
        for &t in tiles {
            let eb = t.elem_bytes();
            for row in (t.index..self.vl).step_by(eb) {
                self.za[row * self.vl..(row + 1) * self.vl].fill(0);
            }
            self.touch(t);
        }
        self.stats.zero_za += 1;
        self.emit(|| {
            let names: Vec<String> = tiles.iter().map(|t| format!("za{}.{}", t.index, t.suffix())).collect();
            format!("zero {{{}}}", names.join(", "))
        });
        Ok(())
    }

    pub fn zero_za_all(&mut self) {
        self.za.fill(0);
        self.stats.zero_za += 1;
        self.emit(|| "zero {za}".to_string());
    }

    /// Lane `k` is active iff `start + k < end`.
    pub fn whilelt(&self, start: usize, end: usize, width_bits: usize) -> PredicateReg {
        let lanes = self.lanes(width_bits);
        let active: Vec<bool> = (0..lanes).map(|k| start + k < end).collect();
        PredicateReg::from_lanes(self.vl, width_bits, &active)
    }

    /// Predicate-as-counter form of `whilelt` spanning a register group.
    pub fn whilelt_count(&self, start: usize, end: usize, width_bits: usize, group: usize) -> Governing<'static> {
        Governing::Count(end.saturating_sub(start).min(group * self.lanes(width_bits)))
    }

    pub fn zero_reg(&mut self, reg: usize) -> Result<(), IsaError> {
        self.check_reg(reg)?;
        self.z_mut(reg).fill(0);
        self.stats.vector_alu += 1;
        self.emit(|| format!("dup z{reg}.b, #0"));
        Ok(())
    }

    /// Lane-wise multiply by a scalar (wrapping for i32).
    pub fn vscale(&mut self, dst: usize, src: usize, factor: Scalar) -> Result<(), IsaError> {
        self.check_reg(dst)?;
        self.check_reg(src)?;
        match factor {
            Scalar::F32(s) => {
                let v: Vec<f32> = self.z_lanes::<f32>(src).into_iter().map(|x| x * s).collect();
                self.set_z_lanes(dst, &v);
            }
            Scalar::F64(s) => {
                let v: Vec<f64> = self.z_lanes::<f64>(src).into_iter().map(|x| x * s).collect();
                self.set_z_lanes(dst, &v);
            }
            Scalar::I32(s) => {
                let v: Vec<i32> = self.z_lanes::<i32>(src).into_iter().map(|x| x.wrapping_mul(s)).collect();
                self.set_z_lanes(dst, &v);
            }
        }
        self.stats.vector_alu += 1;
        self.emit(|| format!("mul z{dst}.{s}, z{src}.{s}, {factor:?}", s = width_suffix(factor.width_bits())));
        Ok(())
    }

    /// Lane-wise add; `kind` selects the element interpretation (its value is ignored).
    pub fn vadd(&mut self, dst: usize, a: usize, b: usize, kind: Scalar) -> Result<(), IsaError> {
        for r in [dst, a, b] {
            self.check_reg(r)?;
        }
        match kind {
            Scalar::F32(_) => {
                let v: Vec<f32> = self.z_lanes::<f32>(a).iter().zip(self.z_lanes::<f32>(b)).map(|(x, y)| x + y).collect();
                self.set_z_lanes(dst, &v);
            }
            Scalar::F64(_) => {
                let v: Vec<f64> = self.z_lanes::<f64>(a).iter().zip(self.z_lanes::<f64>(b)).map(|(x, y)| x + y).collect();
                self.set_z_lanes(dst, &v);
            }
            Scalar::I32(_) => {
                let v: Vec<i32> =
                    self.z_lanes::<i32>(a).iter().zip(self.z_lanes::<i32>(b)).map(|(x, y)| x.wrapping_add(y)).collect();
                self.set_z_lanes(dst, &v);
            }
        }
        self.stats.vector_alu += 1;
        self.emit(|| format!("add z{dst}.{s}, z{a}.{s}, z{b}.{s}", s = width_suffix(kind.width_bits())));
        Ok(())
    }
}

fn gov_text(gov: Governing) -> String {
    match gov {
        Governing::All => "pn/all".to_string(),
        Governing::Mask(p) => {
            let mut s = String::from("p/z:");
            for &b in p.mask() {
                let _ = write!(s, "{}", b as u8);
            }
            s
        }
        Governing::Count(n) => format!("pn/count={n}"),
    }
}

fn pred_text(p: Option<&PredicateReg>) -> String {
    match p {
        None => "p/all".into(),
        Some(p) => format!("p/{}act", p.mask().iter().filter(|&&b| b).count()),
    }
}
