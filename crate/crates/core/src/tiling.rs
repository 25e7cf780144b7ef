//! Analytical cache/TLB blocking planner.
//!
//! `kc` is bounded by the TLB: the pages spanned by one A panel, two B
//! panels and the C rows of a micro-tile must fit in the TLB. `mc`/`nc` then
//! maximize the compute-to-memory ratio of an L2 block subject to the L2
//! working-set budget.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtype::{Layout, PrecisionPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub l2_budget_bytes: u64,
    pub tlb_entries: usize,
    pub page_bytes: u64,
    pub dtype_size_bytes: usize,
    pub svl_bits: usize,
}

impl Default for HardwareProfile {
    fn default() -> Self {
        HardwareProfile { l2_budget_bytes: 8 << 20, tlb_entries: 256, page_bytes: 16 << 10, dtype_size_bytes: 4, svl_bits: 512 }
    }
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.l2_budget_bytes == 0 || self.tlb_entries == 0 || self.page_bytes == 0 {
            return Err(PlanError::Profile("budget, TLB entries and page size must be positive".into()));
        }
        if !matches!(self.dtype_size_bytes, 1 | 2 | 4 | 8) {
            return Err(PlanError::Profile(format!("dtype size {} not in {{1,2,4,8}}", self.dtype_size_bytes)));
        }
        if self.svl_bits < 128 || !self.svl_bits.is_power_of_two() {
            return Err(PlanError::Profile(format!("svl_bits {} must be a power of two >= 128", self.svl_bits)));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("invalid hardware profile: {0}")]
    Profile(String),
    #[error("TLB constraint infeasible: {entries} entries cannot hold A, 2xB and {mr} C pages (need more than {need})")]
    TlbInfeasible { entries: usize, mr: usize, need: usize },
    #[error("L2 budget of {budget} bytes cannot hold a single {mr}x{nr}x{kc} block ({need} bytes)")]
    L2Infeasible { budget: u64, need: u64, mr: usize, nr: usize, kc: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingParams {
    pub mc: usize,
    pub nc: usize,
    pub kc: usize,
    pub mr: usize,
    pub nr: usize,
    /// Granularity of `kc` (the kernel's K unroll in elements).
    pub k_unit: usize,
}

impl TilingParams {
    pub fn cmr(&self) -> f64 {
        cmr(self.mc, self.nc, self.kc)
    }
}

impl fmt::Display for TilingParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mc={} nc={} kc={} mr={} nr={}", self.mc, self.nc, self.kc, self.mr, self.nr)
    }
}

/// Compute-to-memory ratio of an `mc x nc x kc` L2 block.
pub fn cmr(mc: usize, nc: usize, kc: usize) -> f64 {
    let (m, n, k) = (mc as f64, nc as f64, kc as f64);
    2.0 * m * n * k / (m * k + k * n + 2.0 * m * n)
}

/// Micro-tile shape of the main kernel: a row of four accumulator tiles for
/// row-major C, a column of four for column-major C.
pub fn micro_tile_shape(precision: PrecisionPair, svl_bits: usize, layout: Layout) -> (usize, usize) {
    let side = svl_bits / (precision.output().bits());
    match layout {
        Layout::Row => (side, 4 * side),
        Layout::Col => (4 * side, side),
    }
}

/// Elements of the L2 working set counted by the budget constraint: the A
/// block, the B block and the C block, with the B and C terms reserved
/// twice (packed buffer plus source).
pub fn l2_footprint_elems(mc: usize, nc: usize, kc: usize) -> u128 {
    let (m, n, k) = (mc as u128, nc as u128, kc as u128);
    m * k + k * n + m * n + k * n + m * n
}

/// TLB entries needed by one micro-kernel sweep with depth `kc`.
pub fn tlb_entries_needed(profile: &HardwareProfile, mr: usize, nr: usize, kc: usize) -> usize {
    let ds = profile.dtype_size_bytes as u64;
    let pages = |rows: usize| ((rows as u64 * kc as u64 * ds).div_ceil(profile.page_bytes) + 1) as usize;
    pages(mr) + 2 * pages(nr) + mr
}

/// Largest multiple of `k_unit` whose TLB footprint stays strictly below
/// the entry count.
pub fn solve_kc(profile: &HardwareProfile, mr: usize, nr: usize, k_unit: usize) -> Result<usize, PlanError> {
    profile.validate()?;
    let fits = |kc: usize| tlb_entries_needed(profile, mr, nr, kc) < profile.tlb_entries;
    if !fits(k_unit) {
        return Err(PlanError::TlbInfeasible {
            entries: profile.tlb_entries,
            mr,
            need: tlb_entries_needed(profile, mr, nr, k_unit),
        });
    }
    // The footprint is monotone in kc; find an infeasible upper bound, then bisect.
    let mut lo = 1usize;
    let mut hi = 2usize;
    while fits(hi * k_unit) {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid * k_unit) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo * k_unit)
}

/// Continuous maximizer of the compute-to-memory ratio on the budget
/// boundary `mk + 2kn + 2mn = budget_elems`.
///
/// The multiplier condition reduces to `m^2 (k + 2n) = n^2 (2k + 2m)`, which
/// gives `m` as a function of `n`; the boundary is then found by bisection
/// on `n`.
pub fn continuous_optimum(budget_elems: f64, kc: usize) -> Option<(f64, f64)> {
    let k = kc as f64;
    let m_of = |n: f64| (n * n + n * (n * n + 2.0 * k * (k + 2.0 * n)).sqrt()) / (k + 2.0 * n);
    let used = |n: f64| {
        let m = m_of(n);
        m * k + 2.0 * k * n + 2.0 * m * n
    };
    if budget_elems <= 0.0 {
        return None;
    }
    let mut lo = 0.0f64;
    let mut hi = budget_elems / (2.0 * k).max(1.0) + 1.0;
    while used(hi) < budget_elems {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if used(mid) < budget_elems {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((m_of(lo), lo))
}

/// Result of the `mc`/`nc` search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockChoice {
    pub mc: usize,
    pub nc: usize,
    pub continuous_mc: f64,
    pub continuous_nc: f64,
}

/// Best `(mc, nc)` on the `(mr, nr)` grid under the L2 budget, by CMR, ties
/// toward larger `nc`.
///
/// For a fixed `nc` the ratio grows with `mc`, so only the largest feasible
/// `mc` per `nc` is a candidate; the scan over those frontier points is exact.
pub fn solve_mc_nc(profile: &HardwareProfile, kc: usize, mr: usize, nr: usize) -> Result<BlockChoice, PlanError> {
    profile.validate()?;
    let ds = profile.dtype_size_bytes as u128;
    let budget = profile.l2_budget_bytes as u128;
    let fits = |mc: usize, nc: usize| ds * l2_footprint_elems(mc, nc, kc) < budget;
    if !fits(mr, nr) {
        return Err(PlanError::L2Infeasible {
            budget: profile.l2_budget_bytes,
            need: (ds * l2_footprint_elems(mr, nr, kc)) as u64,
            mr,
            nr,
            kc,
        });
    }
    let (cm, cn) = continuous_optimum(profile.l2_budget_bytes as f64 / ds as f64, kc).unwrap_or((0.0, 0.0));
    let mut best: Option<(f64, usize, usize)> = None;
    let mut nc = nr;
    while fits(mr, nc) {
        // Largest mc (multiple of mr) with ds*(mk + 2kn + 2mn) < budget.
        let fixed = ds * 2 * kc as u128 * nc as u128;
        let per_m = ds * (kc as u128 + 2 * nc as u128);
        let m_max = (budget - fixed - 1) / per_m;
        let mc = (m_max as usize / mr) * mr;
        debug_assert!(mc >= mr && fits(mc, nc) && !fits(mc + mr, nc));
        let r = cmr(mc, nc, kc);
        if best.is_none_or(|(b, _, _)| r >= b) {
            best = Some((r, mc, nc));
        }
        nc += nr;
    }
    let (_, mc, nc) = best.expect("at least one feasible cell");
    Ok(BlockChoice { mc, nc, continuous_mc: cm, continuous_nc: cn })
}

/// Full plan for a precision pair and layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub params: TilingParams,
    pub choice: BlockChoice,
}

pub fn plan(profile: &HardwareProfile, precision: PrecisionPair, layout: Layout) -> Result<Plan, PlanError> {
    let (mr, nr) = micro_tile_shape(precision, profile.svl_bits, layout);
    let k_unit = precision.k_unit();
    let kc = solve_kc(profile, mr, nr, k_unit)?;
    let choice = solve_mc_nc(profile, kc, mr, nr)?;
    Ok(Plan { params: TilingParams { mc: choice.mc, nc: choice.nc, kc, mr, nr, k_unit }, choice })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// A block dimension is zero or not a multiple of its unit.
    Granularity { what: String, value: usize, unit: usize },
    /// L2 working set reaches the budget.
    L2Budget { need_bytes: u64, budget_bytes: u64 },
    /// TLB footprint reaches the entry count.
    Tlb { need_entries: usize, entries: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Granularity { what, value, unit } => write!(f, "{what}={value} is not a positive multiple of {unit}"),
            Violation::L2Budget { need_bytes, budget_bytes } => {
                write!(f, "L2 budget: working set {need_bytes} B is not below {budget_bytes} B")
            }
            Violation::Tlb { need_entries, entries } => write!(f, "TLB: {need_entries} pages needed, must be below {entries}"),
        }
    }
}

/// Slack of both constraints for a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slack {
    pub l2_need_bytes: u64,
    pub l2_budget_bytes: u64,
    pub tlb_need_entries: usize,
    pub tlb_entries: usize,
}

pub fn slack(params: &TilingParams, profile: &HardwareProfile) -> Slack {
    let need = profile.dtype_size_bytes as u128 * l2_footprint_elems(params.mc, params.nc, params.kc);
    Slack {
        l2_need_bytes: need.min(u64::MAX as u128) as u64,
        l2_budget_bytes: profile.l2_budget_bytes,
        tlb_need_entries: tlb_entries_needed(profile, params.mr, params.nr, params.kc),
        tlb_entries: profile.tlb_entries,
    }
}

pub fn validate(params: &TilingParams, profile: &HardwareProfile) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let mut gran = |what: &str, value: usize, unit: usize| {
        if value == 0 || unit == 0 || !value.is_multiple_of(unit) {
            v.push(Violation::Granularity { what: what.into(), value, unit });
        }
    };
    gran("mc", params.mc, params.mr);
    gran("nc", params.nc, params.nr);
    gran("kc", params.kc, params.k_unit);
    let s = slack(params, profile);
    if s.l2_need_bytes >= s.l2_budget_bytes {
        v.push(Violation::L2Budget { need_bytes: s.l2_need_bytes, budget_bytes: s.l2_budget_bytes });
    }
    if s.tlb_need_entries >= s.tlb_entries {
        v.push(Violation::Tlb { need_entries: s.tlb_need_entries, entries: s.tlb_entries });
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_tlb() -> HardwareProfile {
        HardwareProfile { tlb_entries: 64, page_bytes: 4096, dtype_size_bytes: 4, ..Default::default() }
    }

    #[test]
    fn shapes() {
        assert_eq!(micro_tile_shape(PrecisionPair::F32, 512, Layout::Row), (16, 64));
        assert_eq!(micro_tile_shape(PrecisionPair::F32, 512, Layout::Col), (64, 16));
        assert_eq!(micro_tile_shape(PrecisionPair::F64, 512, Layout::Row), (8, 32));
        assert_eq!(micro_tile_shape(PrecisionPair::F16F32, 512, Layout::Row), (16, 64));
        assert_eq!(micro_tile_shape(PrecisionPair::I8I32, 256, Layout::Row), (8, 32));
    }

    #[test]
    fn cmr_identities() {
        assert_eq!(cmr(64, 64, 64), 32.0);
        assert_eq!(cmr(1, 1, 1), 0.5);
    }

    #[test]
    fn kc_small_tlb_example() {
        let p = small_tlb();
        assert_eq!(solve_kc(&p, 16, 64, 16).unwrap(), 304);
        // 6 + 2*20 + 16 = 62 at kc=304; 6 + 2*21 + 16 = 64 at kc=320.
        assert!(tlb_entries_needed(&p, 16, 64, 304) < 64);
        assert!(tlb_entries_needed(&p, 16, 64, 320) >= 64);
    }

    #[test]
    fn kc_floor_and_infeasible() {
        let huge = HardwareProfile { tlb_entries: 16 + 7, page_bytes: 1 << 40, ..small_tlb() };
        assert!(solve_kc(&huge, 16, 64, 16).unwrap() >= 16);
        let tight = HardwareProfile { tlb_entries: 16 + 6, ..huge };
        assert!(matches!(solve_kc(&tight, 16, 64, 16), Err(PlanError::TlbInfeasible { .. })));
    }

    #[test]
    fn planner_output_validates() {
        for pp in PrecisionPair::ALL {
            for layout in [Layout::Row, Layout::Col] {
                let p = HardwareProfile { dtype_size_bytes: pp.output().bytes(), ..Default::default() };
                let plan = plan(&p, pp, layout).unwrap();
                assert_eq!(validate(&plan.params, &p), Ok(()), "{pp} {layout}");
            }
        }
    }

    #[test]
    fn validate_names_violations() {
        let p = small_tlb();
        let good = plan(&p, PrecisionPair::F32, Layout::Row).unwrap().params;
        let inflated = TilingParams { mc: good.mc * 2, nc: good.nc * 2, ..good };
        assert!(validate(&inflated, &p).unwrap_err().iter().any(|v| matches!(v, Violation::L2Budget { .. })));
        let deep = TilingParams { kc: good.kc + 16, ..good };
        assert!(validate(&deep, &p).unwrap_err().iter().any(|v| matches!(v, Violation::Tlb { .. })));
        let ragged = TilingParams { mc: good.mc + 1, ..good };
        assert!(matches!(validate(&ragged, &p).unwrap_err()[0], Violation::Granularity { .. }));
    }

    #[test]
    fn l2_infeasible() {
        let p = HardwareProfile { l2_budget_bytes: 1024, ..small_tlb() };
        assert!(matches!(solve_mc_nc(&p, 304, 16, 64), Err(PlanError::L2Infeasible { .. })));
    }

    #[test]
    fn continuous_optimum_satisfies_multiplier_condition() {
        let (m, n) = continuous_optimum(2.0e6, 304).unwrap();
        let k = 304.0;
        assert!((m * m * (k + 2.0 * n) - n * n * (2.0 * k + 2.0 * m)).abs() / (m * m * (k + 2.0 * n)) < 1e-9);
        assert!(((m * k + 2.0 * k * n + 2.0 * m * n) - 2.0e6).abs() < 1e-3);
    }
}
