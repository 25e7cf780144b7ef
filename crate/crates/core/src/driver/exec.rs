//! Loop nest, macro kernel and unit workers.

use std::time::Instant;

use super::{schedule, GemmConfig, GemmError, ResolvedTiling, RunReport, TaskRecord};
use crate::kernels::{run_kernel, BSource, CTile, KernelShape, MicroTask};
use crate::matrix::MatrixView;
use crate::memsim::{CacheHierarchy, MemStats, MemoryImage, SystemProfile, DEFAULT_ALIGN};
use crate::packing::{pack_a, pack_b, pack_b_chunk, PanelGeometry};
use crate::vsme::{InstrStats, MachineConfig, MachineState};

/// Everything a unit needs that does not change during the run.
struct Ctx<'a> {
    mem: &'a MemoryImage,
    cfg: &'a GemmConfig,
    geom: PanelGeometry,
    t: &'a ResolvedTiling,
    a: &'a MatrixView,
    b: &'a MatrixView,
    c: &'a MatrixView,
    pack_b: bool,
    max_group: usize,
}

struct Unit {
    id: usize,
    m: MachineState,
    ac: u64,
    bc: u64,
    max_footprint: u64,
}

/// Chunks of the current B block not yet packed (online packing only).
type Pending = Option<Vec<bool>>;

impl Ctx<'_> {
    fn m(&self) -> usize {
        self.a.rows
    }

    fn n(&self) -> usize {
        self.b.cols
    }

    fn k(&self) -> usize {
        self.a.cols
    }

    /// Pack the `kb x nb` block of B at `(pc, jc)`, or defer it chunk by
    /// chunk when packing online.
    fn prepare_b(&self, u: &mut Unit, (pc, jc): (usize, usize), (kb, nb): (usize, usize)) -> Result<Pending, GemmError> {
        if !self.pack_b {
            return Ok(None);
        }
        let kcu = self.geom.kcu_for(kb);
        if self.cfg.ablation.online_pack {
            return Ok(Some(vec![true; self.geom.b_chunks(nb)]));
        }
        pack_b(&mut u.m, self.mem, self.b, (pc, jc), (kb, nb), kcu, u.bc, self.max_group)?;
        Ok(None)
    }

    /// One L3 step: pack the `mb x kb` block of A, then sweep the micro-panels.
    #[allow(clippy::too_many_arguments)]
    fn block(
        &self,
        u: &mut Unit,
        (ic, jc, pc): (usize, usize, usize),
        (mb, nb, kb): (usize, usize, usize),
        beta: f64,
        pending: &mut Pending,
    ) -> Result<(), GemmError> {
        let g = &self.geom;
        let kcu = g.kcu_for(kb);
        pack_a(&mut u.m, self.mem, self.a, (ic, pc), (mb, kb), kcu, u.ac, self.max_group)?;

        let ob = self.cfg.precision.output().bytes() as u64;
        let eb = self.cfg.precision.input().bytes() as u64;
        let bc = if self.pack_b { g.bc_bytes(nb, kcu) } else { 0 };
        let fp = g.ac_bytes(mb, kcu) + bc + (mb * nb) as u64 * ob + (kb * nb) as u64 * eb;
        u.max_footprint = u.max_footprint.max(fp);

        let t = g.panel_rows();
        let nr = g.nr();
        let a_stride = g.a_panel_bytes(kcu);
        let m_panels = mb.div_ceil(t);
        for jp in 0..nb.div_ceil(nr) {
            let j0 = jp * nr;
            let cols = nr.min(nb - j0);
            if let Some(p) = pending.as_mut() {
                let chunk = j0 / g.b_chunk_cols();
                if p[chunk] {
                    pack_b_chunk(&mut u.m, self.mem, self.b, (pc, jc), (kb, nb), kcu, u.bc, chunk, self.max_group)?;
                    p[chunk] = false;
                }
            }
            let b_at = |col: usize| {
                if self.pack_b {
                    BSource::Packed { panel: u.bc + jp as u64 * g.b_panel_bytes(kcu), col_offset: col }
                } else {
                    BSource::Strided { addr: self.b.addr(pc, jc + j0 + col), ld: self.b.ld, k_rows: kb }
                }
            };
            let c_at = |i: usize, j: usize, rows: usize, cols: usize| CTile {
                addr: self.c.addr(ic + i, jc + j),
                ld: self.c.ld,
                rows,
                cols,
            };
            let task = |shape, ip: usize, b, c| MicroTask {
                precision: self.cfg.precision,
                shape,
                a_panel: u.ac + ip as u64 * a_stride,
                a_panel_stride: a_stride,
                b,
                c,
                kcu,
                alpha: self.cfg.alpha,
                beta,
            };

            let strips = cols.div_ceil(t);
            let mut ip = 0;
            while ip < m_panels {
                let i0 = ip * t;
                let span = 4.min(m_panels - ip);
                if strips < span {
                    // Narrow column remainder: tall strips fill all four tiles.
                    let rows = (4 * t).min(mb - i0);
                    for s in 0..strips {
                        let sc = (cols - s * t).min(t);
                        let mt = task(KernelShape::Edge, ip, b_at(s * t), c_at(i0, j0 + s * t, rows, sc));
                        run_kernel(&mut u.m, self.mem, &mt, self.max_group)?;
                    }
                    ip += span;
                } else {
                    let mt = task(KernelShape::Main, ip, b_at(0), c_at(i0, j0, t.min(mb - i0), cols));
                    run_kernel(&mut u.m, self.mem, &mt, self.max_group)?;
                    ip += 1;
                }
            }
        }
        Ok(())
    }

    /// All K blocks of the `(ic, jc)` output block.
    fn output_block(&self, u: &mut Unit, ic: usize, jc: usize) -> Result<(), GemmError> {
        let mb = self.t.mc.min(self.m() - ic);
        let nb = self.t.nc.min(self.n() - jc);
        let mut pc = 0;
        for kb in self.t.k_blocks(self.k()) {
            let beta = if pc == 0 { self.cfg.beta } else { 1.0 };
            let mut pending = self.prepare_b(u, (pc, jc), (kb, nb))?;
            self.block(u, (ic, jc, pc), (mb, nb, kb), beta, &mut pending)?;
            pc += kb;
        }
        Ok(())
    }

    /// Single-unit nest: column blocks, K blocks, row blocks. B is packed
    /// once per (column block, K block) and reused by every row block.
    fn serial(&self, u: &mut Unit) -> Result<(), GemmError> {
        for jc in (0..self.n()).step_by(self.t.nc) {
            let nb = self.t.nc.min(self.n() - jc);
            let mut pc = 0;
            for kb in self.t.k_blocks(self.k()) {
                let beta = if pc == 0 { self.cfg.beta } else { 1.0 };
                let mut pending = self.prepare_b(u, (pc, jc), (kb, nb))?;
                for ic in (0..self.m()).step_by(self.t.mc) {
                    let mb = self.t.mc.min(self.m() - ic);
                    self.block(u, (ic, jc, pc), (mb, nb, kb), beta, &mut pending)?;
                }
                pc += kb;
            }
        }
        Ok(())
    }
}

fn new_unit(
    mem: &mut MemoryImage,
    profile: &SystemProfile,
    ctx_geom: &PanelGeometry,
    t: &ResolvedTiling,
    pack_b: bool,
    id: usize,
) -> Result<Unit, GemmError> {
    let kcu = ctx_geom.kcu_for(t.kc);
    let tag = mem.regions().len();
    let ac = mem.alloc_region(&format!("gemm{tag}.ac{id}"), ctx_geom.ac_bytes(t.mc, kcu), DEFAULT_ALIGN)?;
    let bc = if pack_b {
        mem.alloc_region(&format!("gemm{tag}.bc{id}"), ctx_geom.bc_bytes(t.nc, kcu), DEFAULT_ALIGN)?
    } else {
        0
    };
    let hier = CacheHierarchy::new(profile.cache_config()?, profile.tlb_config()?);
    let m = MachineState::new(MachineConfig::new(profile.svl_bits, id)?, hier);
    Ok(Unit { id, m, ac, bc, max_footprint: 0 })
}

/// Execute the row-major problem `c = alpha * a * b + beta * c`.
/// `dims` is the caller's `(m, n, k)` for the report.
#[allow(clippy::too_many_arguments)]
pub(super) fn run(
    mem: &mut MemoryImage,
    cfg: &GemmConfig,
    profile: &SystemProfile,
    t: &ResolvedTiling,
    a: &MatrixView,
    b: &MatrixView,
    c: &MatrixView,
    (m, n, k): (usize, usize, usize),
) -> Result<RunReport, GemmError> {
    let start = Instant::now();
    let geom = PanelGeometry::new(cfg.precision, profile.svl_bits);
    // The strided kernel path only exists for one-element packing units.
    let pack_b = cfg.ablation.blocking || geom.k_group() != 1;
    let tasks = schedule::task_queue(a.rows, b.cols, t.mc, t.nc, cfg.queue_seed);
    let workers = cfg.units.min(tasks.len()).max(1);

    let mut units = (0..workers).map(|id| new_unit(mem, profile, &geom, t, pack_b, id)).collect::<Result<Vec<_>, _>>()?;
    if let Some(limit) = cfg.trace_limit {
        units[0].m.enable_trace(limit);
    }

    let mem: &MemoryImage = mem;
    let ctx = Ctx { mem, cfg, geom, t, a, b, c, pack_b, max_group: cfg.ablation.max_group() };
    let mut log = Vec::new();
    if workers == 1 {
        ctx.serial(&mut units[0])?;
    } else {
        // Ticket t goes to unit t mod workers, so each unit's cache history
        // (and hence every counter) is independent of thread timing.
        let results: Vec<Result<Vec<TaskRecord>, GemmError>> = std::thread::scope(|s| {
            let handles: Vec<_> = units
                .iter_mut()
                .map(|u| {
                    let (ctx, tasks) = (&ctx, &tasks);
                    s.spawn(move || -> Result<Vec<TaskRecord>, GemmError> {
                        let mut done = Vec::new();
                        for ticket in (u.id..tasks.len()).step_by(workers) {
                            let (ic, jc) = tasks[ticket];
                            done.push(TaskRecord { ticket, unit: u.id, ic, jc });
                            ctx.output_block(u, ic, jc)?;
                        }
                        Ok(done)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("unit worker panicked")).collect()
        });
        for r in results {
            log.extend(r?);
        }
        log.sort_by_key(|r| r.ticket);
    }

    let (trace, trace_dropped) = units[0].m.take_trace();
    let per_unit_mem: Vec<MemStats> = units.iter().map(|u| u.m.mem_stats()).collect();
    let instr: InstrStats = units.iter_mut().map(|u| u.m.take_stats()).sum();
    Ok(RunReport {
        precision: cfg.precision,
        layout: cfg.layout,
        m,
        n,
        k,
        units: workers,
        alpha: cfg.alpha,
        beta: cfg.beta,
        ablation: cfg.ablation,
        tiling: *t,
        instr,
        mem: per_unit_mem.iter().copied().sum(),
        per_unit_mem,
        max_block_footprint_bytes: units.iter().map(|u| u.max_footprint).max().unwrap_or(0),
        l2_budget_bytes: profile.working_set_bytes,
        tasks: log,
        trace,
        trace_dropped,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
