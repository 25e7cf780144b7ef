//! Text tables and JSON report files.

use std::fmt::Write as _;
use std::path::Path;

use sme_gemm::driver::{planner_profile, GemmConfig};
use sme_gemm::memsim::SystemProfile;
use sme_gemm::tiling::{self, Plan};
use sme_gemm::{Layout, PrecisionPair};

use crate::runner::{AblationReport, RunRecord};
use crate::CliError;

pub fn table(records: &[RunRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<18} {:<9} {:<4} {:>18} {:>3} {:<4} {:>9} {:>5} {:>6} {:>8} {:>8} {:>12} {:>6} {:>8}",
        "run", "dtype", "lay", "MxNxK", "u", "ok", "rel.err", "exact", "util", "L2miss", "TLBmiss", "main/edge", "g4", "secs"
    );
    for r in records {
        let p = &r.report;
        let g4 = p.instr.interior_group4_fraction().map_or("-".to_string(), |f| format!("{f:.3}"));
        let _ = writeln!(
            s,
            "{:<18} {:<9} {:<4} {:>18} {:>3} {:<4} {:>9.2e} {:>5} {:>6.3} {:>8} {:>8} {:>12} {:>6} {:>8.2}",
            r.label,
            p.precision.to_string(),
            p.layout.to_string(),
            format!("{}x{}x{}", p.m, p.n, p.k),
            p.units,
            if r.passed() { "PASS" } else { "FAIL" },
            r.check.max_rel_error,
            r.check.bit_exact,
            p.mopa_utilization(),
            p.mem.l2_misses,
            p.mem.tlb_misses,
            format!("{}/{}", p.instr.main_kernels, p.instr.edge_kernels),
            g4,
            p.wall_seconds,
        );
    }
    let failed = records.iter().filter(|r| !r.passed()).count();
    let _ = writeln!(s, "{} runs, {} failed", records.len(), failed);
    s
}

pub fn ablation_table(a: &AblationReport) -> String {
    let mut s = table(&a.rows);
    let _ = writeln!(s, "C bits identical across rows: {}", a.bits_identical);
    s
}

/// Planner output and constraint slack for one precision and layout.
pub fn explain(cfg: &GemmConfig, profile: &SystemProfile) -> Result<String, CliError> {
    let hw = planner_profile(profile, cfg.precision);
    let Plan { params: t, choice } = tiling::plan(&hw, cfg.precision, cfg.layout)?;
    let sl = tiling::slack(&t, &hw);
    let mut s = String::new();
    let _ = writeln!(s, "{} {} layout, svl {} bits", cfg.precision, cfg.layout, hw.svl_bits);
    let _ = writeln!(s, "  micro tile   mr={} nr={} k_unit={}", t.mr, t.nr, t.k_unit);
    let _ = writeln!(s, "  blocks       mc={} nc={} kc={}  (CMR {:.2})", t.mc, t.nc, t.kc, t.cmr());
    let _ = writeln!(s, "  continuous   mc={:.1} nc={:.1}", choice.continuous_mc, choice.continuous_nc);
    let _ = writeln!(
        s,
        "  L2 working set {} of {} bytes (slack {})",
        sl.l2_need_bytes,
        sl.l2_budget_bytes,
        sl.l2_budget_bytes as i128 - sl.l2_need_bytes as i128
    );
    let _ = writeln!(
        s,
        "  TLB entries    {} of {} (slack {})",
        sl.tlb_need_entries,
        sl.tlb_entries,
        sl.tlb_entries as i64 - sl.tlb_need_entries as i64
    );
    Ok(s)
}

pub fn explain_all(precisions: &[PrecisionPair], layout: Layout, profile: &SystemProfile) -> Result<String, CliError> {
    let mut s = String::new();
    for &p in precisions {
        s += &explain(&GemmConfig { layout, ..GemmConfig::new(p) }, profile)?;
    }
    Ok(s)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

/// One `<label>.json` per record plus `summary.json` with every record.
pub fn write_records(dir: &Path, prefix: &str, records: &[RunRecord]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    for r in records {
        let name = format!("{prefix}{}-{}.json", r.label.replace(':', "_"), r.report.precision.label());
        write_json(&dir.join(name), r)?;
    }
    write_json(&dir.join(format!("{prefix}summary.json")), &records)
}
