//! Seeded problem setup, oracle checks and the experiment drivers.

use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sme_gemm::driver::{gemm_host, Ablation, GemmConfig, HostProblem, RunReport};
use sme_gemm::matrix::HostMatrix;
use sme_gemm::memsim::SystemProfile;
use sme_gemm::oracle::{self, Problem};
use sme_gemm::PrecisionPair;

use crate::workloads::WorkloadSpec;
use crate::CliError;

/// Row and column sizes of the irregular sweep.
pub const IRREGULAR_DIMS: [usize; 5] = [80, 110, 140, 170, 200];
pub const DEFAULT_SWEEP_K: usize = 2560;

/// Elementwise relative tolerance against the f64 oracle.
pub fn tolerance(p: PrecisionPair) -> f64 {
    match p {
        PrecisionPair::F32 => 1e-5,
        PrecisionPair::F64 => 1e-12,
        PrecisionPair::F16F32 => 1e-2,
        PrecisionPair::I8I32 => 0.0,
    }
}

/// Mix a run index into the user seed so runs get independent streams.
pub fn run_seed(seed: u64, salt: u64) -> u64 {
    seed ^ salt.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Random operands: floats uniform in [-1, 1] (f16 rounded from f64),
/// i8 over the full range, integer C over the i8 range.
pub fn init_problem(p: PrecisionPair, m: usize, n: usize, k: usize, seed: u64) -> HostProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut floats = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect() };
    let (a, b, c) = (floats(m * k), floats(k * n), floats(m * n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(32));
    let mut ints = |len: usize| -> Vec<i8> { (0..len).map(|_| rng.gen()).collect() };
    let (a, b, c) = match p {
        PrecisionPair::F32 => (
            HostMatrix::F32(a.iter().map(|&x| x as f32).collect()),
            HostMatrix::F32(b.iter().map(|&x| x as f32).collect()),
            HostMatrix::F32(c.iter().map(|&x| x as f32).collect()),
        ),
        PrecisionPair::F64 => (HostMatrix::F64(a), HostMatrix::F64(b), HostMatrix::F64(c)),
        PrecisionPair::F16F32 => (
            HostMatrix::F16(a.iter().map(|&x| f16::from_f64(x)).collect()),
            HostMatrix::F16(b.iter().map(|&x| f16::from_f64(x)).collect()),
            HostMatrix::F32(c.iter().map(|&x| x as f32).collect()),
        ),
        PrecisionPair::I8I32 => (
            HostMatrix::I8(ints(m * k)),
            HostMatrix::I8(ints(k * n)),
            HostMatrix::I32(ints(m * n).into_iter().map(i32::from).collect()),
        ),
    };
    HostProblem { m, n, k, a, b, c }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    /// Matches the kernel-order replay bit for bit (exact result for integers).
    pub bit_exact: bool,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn check(cfg: &GemmConfig, hp: &HostProblem, got: &HostMatrix, report: &RunReport) -> Check {
    let pv = Problem { m: hp.m, n: hp.n, k: hp.k, a: &hp.a, b: &hp.b, c: &hp.c, alpha: cfg.alpha, beta: cfg.beta };
    let tol = tolerance(cfg.precision);
    if let (HostMatrix::I8(a), HostMatrix::I8(b), HostMatrix::I32(c)) = (&hp.a, &hp.b, &hp.c) {
        let want = oracle::reference_i32(hp.m, hp.n, hp.k, a, b, c, cfg.alpha as i32, cfg.beta as i32);
        let exact = matches!(got, HostMatrix::I32(g) if *g == want);
        return Check { bit_exact: exact, max_rel_error: if exact { 0.0 } else { f64::INFINITY }, tolerance: tol, pass: exact };
    }
    let replay = oracle::same_order(cfg.precision, &pv, &report.tiling.k_blocks(hp.k));
    let bit_exact = replay.to_bits() == got.to_bits();
    let (want, scale) = oracle::reference_f64(&pv);
    let err = oracle::max_rel_error(&got.to_f64(), &want, &scale);
    Check { bit_exact, max_rel_error: err, tolerance: tol, pass: bit_exact && err <= tol }
}

/// One checked run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    pub check: Check,
    pub report: RunReport,
}

impl RunRecord {
    pub fn passed(&self) -> bool {
        self.check.pass
    }
}

pub fn run_one(
    label: &str,
    cfg: &GemmConfig,
    profile: &SystemProfile,
    (m, n, k): (usize, usize, usize),
    seed: u64,
) -> Result<RunRecord, CliError> {
    let hp = init_problem(cfg.precision, m, n, k, seed);
    let (got, report) = gemm_host(cfg, profile, &hp)?;
    let check = check(cfg, &hp, &got, &report);
    Ok(RunRecord { label: label.to_string(), seed, check, report })
}

pub fn run_workloads(
    specs: &[WorkloadSpec],
    cfg: &GemmConfig,
    profile: &SystemProfile,
    seed: u64,
) -> Result<Vec<RunRecord>, CliError> {
    specs
        .iter()
        .map(|w| run_one(&w.label(), cfg, profile, (w.m, w.n, w.k), run_seed(seed, w.id as u64)))
        .collect()
}

/// Every (M, N) pair of [`IRREGULAR_DIMS`] with a fixed K.
pub fn run_irregular_sweep(
    k: usize,
    cfg: &GemmConfig,
    profile: &SystemProfile,
    seed: u64,
) -> Result<Vec<RunRecord>, CliError> {
    let mut out = Vec::new();
    for (i, &m) in IRREGULAR_DIMS.iter().enumerate() {
        for (j, &n) in IRREGULAR_DIMS.iter().enumerate() {
            let label = format!("m{m}n{n}");
            out.push(run_one(&label, cfg, profile, (m, n, k), run_seed(seed, 1000 + (i * 5 + j) as u64))?);
        }
    }
    Ok(out)
}

/// Optimization breakdown rows, each adding one switch to the previous.
pub const ABLATION_STEPS: [(&str, Ablation); 4] = [
    ("baseline", Ablation::BASELINE),
    ("+blocking", Ablation { blocking: true, four_way: false, online_pack: false }),
    ("+4-way", Ablation { blocking: true, four_way: true, online_pack: false }),
    ("+online", Ablation { blocking: true, four_way: true, online_pack: true }),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<RunRecord>,
    /// All rows produced the same C bits (expected when alpha is 1).
    pub bits_identical: bool,
}

pub fn run_ablation(
    label: &str,
    cfg: &GemmConfig,
    profile: &SystemProfile,
    dims: (usize, usize, usize),
    seed: u64,
) -> Result<AblationReport, CliError> {
    let hp = init_problem(cfg.precision, dims.0, dims.1, dims.2, seed);
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for (name, ablation) in ABLATION_STEPS {
        let cfg = GemmConfig { ablation, ..cfg.clone() };
        let (got, report) = gemm_host(&cfg, profile, &hp)?;
        let check = check(&cfg, &hp, &got, &report);
        outputs.push(got.to_bits());
        rows.push(RunRecord { label: format!("{label}:{name}"), seed, check, report });
    }
    let bits_identical = outputs.windows(2).all(|w| w[0] == w[1]);
    Ok(AblationReport { rows, bits_identical })
}

/// Pack the first `mc x kc` block of A and `kc x nc` block of B (row-major
/// operands) and write them as `a.pkbf` and `b.pkbf` under `dir`.
pub fn dump_packed(
    dir: &std::path::Path,
    cfg: &GemmConfig,
    profile: &SystemProfile,
    (m, n, k): (usize, usize, usize),
    seed: u64,
) -> Result<(), CliError> {
    use sme_gemm::driver::resolve_tiling;
    use sme_gemm::memsim::{CacheHierarchy, MemoryImage, DEFAULT_ALIGN};
    use sme_gemm::packing::{pack_a, pack_b, write_dump, DumpHeader, PanelGeometry};
    use sme_gemm::vsme::{MachineConfig, MachineState};
    use sme_gemm::Layout;

    let row_cfg = GemmConfig { layout: Layout::Row, ..cfg.clone() };
    let t = resolve_tiling(&row_cfg, profile, m, n, k)?;
    let geom = PanelGeometry::new(cfg.precision, profile.svl_bits);
    let (mb, nb, kb) = (t.mc.min(m), t.nc.min(n), t.kc.min(k));
    let kcu = geom.kcu_for(kb);
    let hp = init_problem(cfg.precision, m, n, k, seed);
    let (a_bytes, b_bytes) = (geom.ac_bytes(mb, kcu), geom.bc_bytes(nb, kcu));
    let mut mem = MemoryImage::new(((m * k + k * n) * cfg.precision.input().bytes()) as u64 + a_bytes + b_bytes + 8 * DEFAULT_ALIGN);
    let a = hp.a.store(&mut mem, "A", m, k, Layout::Row)?;
    let b = hp.b.store(&mut mem, "B", k, n, Layout::Row)?;
    let ac = mem.alloc_region("Ac", a_bytes, DEFAULT_ALIGN)?;
    let bc = mem.alloc_region("Bc", b_bytes, DEFAULT_ALIGN)?;
    let hier = CacheHierarchy::new(profile.cache_config()?, profile.tlb_config()?);
    let mut mach = MachineState::new(MachineConfig::new(profile.svl_bits, 0)?, hier);
    pack_a(&mut mach, &mem, &a, (0, 0), (mb, kb), kcu, ac, 4)?;
    pack_b(&mut mach, &mem, &b, (0, 0), (kb, nb), kcu, bc, 4)?;

    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    let interleave = geom.k_group() as u8;
    let dtype = cfg.precision.input();
    for (name, rows, cols, addr, len) in [("a.pkbf", mb, kb, ac, a_bytes), ("b.pkbf", kb, nb, bc, b_bytes)] {
        let path = dir.join(name);
        let header = DumpHeader { rows: rows as u64, cols: cols as u64, dtype, interleave };
        write_dump(&path, &header, &mem.read_vec(addr, len)?)
            .map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    }
    Ok(())
}
