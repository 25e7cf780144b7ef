use proptest::prelude::*;
use sme_gemm::tiling::{
    cmr, continuous_optimum, plan, solve_kc, solve_mc_nc, validate, HardwareProfile, PlanError, TilingParams,
};
use sme_gemm::{Layout, PrecisionPair};

/// Brute force over every grid cell up to the budget.
fn grid_best(p: &HardwareProfile, kc: usize, mr: usize, nr: usize) -> Option<(usize, usize)> {
    let ds = p.dtype_size_bytes as u128;
    let (k, b) = (kc as u128, p.l2_budget_bytes as u128);
    let feasible = |m: u128, n: u128| ds * (m * k + 2 * k * n + 2 * m * n) < b;
    let mut best: Option<(f64, usize, usize)> = None;
    let mut nc = nr;
    while feasible(mr as u128, nc as u128) {
        let mut mc = mr;
        while feasible(mc as u128, nc as u128) {
            let r = cmr(mc, nc, kc);
            let better = match best {
                None => true,
                Some((br, bm, bn)) => r > br || (r == br && (nc, mc) > (bn, bm)),
            };
            if better {
                best = Some((r, mc, nc));
            }
            mc += mr;
        }
        nc += nr;
    }
    best.map(|(_, m, n)| (m, n))
}

/// Linear scan for the largest feasible kc.
fn scan_kc(p: &HardwareProfile, mr: usize, nr: usize, ku: usize) -> Option<usize> {
    let need = |kc: usize| {
        let pages = |rows: usize| (rows * kc * p.dtype_size_bytes).div_ceil(p.page_bytes as usize) + 1;
        pages(mr) + 2 * pages(nr) + mr
    };
    let mut best = None;
    let mut kc = ku;
    while need(kc) < p.tlb_entries {
        best = Some(kc);
        kc += ku;
    }
    best
}

fn profile(budget: u64, entries: usize, page: u64, ds: usize) -> HardwareProfile {
    HardwareProfile { l2_budget_bytes: budget, tlb_entries: entries, page_bytes: page, dtype_size_bytes: ds, svl_bits: 512 }
}

#[test]
fn mc_nc_matches_exhaustive_grid() {
    for budget in [64u64 << 10, 200 << 10, 1 << 20, 3 << 20] {
        for ds in [1, 2, 4, 8] {
            for &(mr, nr) in &[(16, 64), (64, 16), (8, 32), (4, 4)] {
                for kc in [16, 64, 256, 320] {
                    let p = profile(budget, 256, 16384, ds);
                    let got = solve_mc_nc(&p, kc, mr, nr);
                    match grid_best(&p, kc, mr, nr) {
                        Some((m, n)) => {
                            let c = got.unwrap();
                            assert_eq!((c.mc, c.nc), (m, n), "budget {budget} ds {ds} tile {mr}x{nr} kc {kc}");
                        }
                        None => assert!(matches!(got, Err(PlanError::L2Infeasible { .. }))),
                    }
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn kc_matches_linear_scan(
        entries in 1usize..600,
        page_log in 10u32..16,
        ds in prop::sample::select(vec![1usize, 2, 4, 8]),
        tile in prop::sample::select(vec![(16usize, 64usize), (64, 16), (8, 32), (32, 8)]),
        ku in prop::sample::select(vec![16usize, 32, 64]),
    ) {
        let p = profile(1 << 20, entries, 1 << page_log, ds);
        let got = solve_kc(&p, tile.0, tile.1, ku);
        match scan_kc(&p, tile.0, tile.1, ku) {
            Some(kc) => prop_assert_eq!(got.unwrap(), kc),
            None => prop_assert!(matches!(got, Err(PlanError::TlbInfeasible { .. })), "expected infeasible"),
        }
    }

    #[test]
    fn continuous_optimum_is_a_boundary_maximum(budget in 1e4f64..1e8, kc in 16usize..1024) {
        let (m, n) = continuous_optimum(budget, kc).unwrap();
        let k = kc as f64;
        let used = |m: f64, n: f64| m * k + 2.0 * k * n + 2.0 * m * n;
        prop_assert!((used(m, n) - budget).abs() <= 1e-6 * budget);
        let ratio = |m: f64, n: f64| 2.0 * m * n * k / (m * k + k * n + 2.0 * m * n);
        let best = ratio(m, n);
        // Walk along the boundary: m as a function of n.
        for f in [0.5, 0.8, 0.95, 1.05, 1.25, 2.0] {
            let n2 = n * f;
            let m2 = (budget - 2.0 * k * n2) / (k + 2.0 * n2);
            if m2 > 0.0 {
                prop_assert!(ratio(m2, n2) <= best * (1.0 + 1e-9), "f={} beats optimum", f);
            }
        }
    }

    #[test]
    fn plans_satisfy_their_constraints(
        budget in (64u64 << 10)..(16 << 20),
        entries in 64usize..1024,
        page_log in 12u32..17,
        pi in 0usize..4,
        col in any::<bool>(),
    ) {
        let precision = [PrecisionPair::F32, PrecisionPair::F64, PrecisionPair::F16F32, PrecisionPair::I8I32][pi];
        let layout = if col { Layout::Col } else { Layout::Row };
        let p = profile(budget, entries, 1 << page_log, precision.output().bytes());
        if let Ok(plan) = plan(&p, precision, layout) {
            prop_assert!(validate(&plan.params, &p).is_ok());
            let t = plan.params;
            // Growing any block dimension by one unit breaks a constraint or lowers CMR.
            let bigger_k = TilingParams { kc: t.kc + t.k_unit, ..t };
            prop_assert!(validate(&bigger_k, &p).is_err());
            let bigger_m = TilingParams { mc: t.mc + t.mr, ..t };
            prop_assert!(validate(&bigger_m, &p).is_err());
        }
    }
}

#[test]
fn default_plan_for_f32() {
    let plan = plan(&HardwareProfile::default(), PrecisionPair::F32, Layout::Row).unwrap();
    let t = plan.params;
    assert_eq!((t.mr, t.nr, t.k_unit), (16, 64, 16));
    assert_eq!(Some(t.kc), scan_kc(&HardwareProfile::default(), 16, 64, 16));
    assert_eq!(Some((t.mc, t.nc)), grid_best(&HardwareProfile::default(), t.kc, 16, 64));
}
