#![allow(dead_code)]

use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sme_gemm::driver::{GemmConfig, HostProblem, RunReport};
use sme_gemm::matrix::HostMatrix;
use sme_gemm::oracle::{self, Problem};
use sme_gemm::PrecisionPair;

pub const ALL: [PrecisionPair; 4] = [PrecisionPair::F32, PrecisionPair::F64, PrecisionPair::F16F32, PrecisionPair::I8I32];

fn random(dtype_of: PrecisionPair, out: bool, len: usize, rng: &mut ChaCha8Rng) -> HostMatrix {
    let mut f = || rng.gen_range(-1.0..1.0f64);
    match (dtype_of, out) {
        (PrecisionPair::F32, _) | (PrecisionPair::F16F32, true) => HostMatrix::F32((0..len).map(|_| f() as f32).collect()),
        (PrecisionPair::F64, _) => HostMatrix::F64((0..len).map(|_| f()).collect()),
        (PrecisionPair::F16F32, false) => HostMatrix::F16((0..len).map(|_| f16::from_f64(f())).collect()),
        (PrecisionPair::I8I32, false) => HostMatrix::I8((0..len).map(|_| rng.gen()).collect()),
        (PrecisionPair::I8I32, true) => HostMatrix::I32((0..len).map(|_| rng.gen_range(-1000..1000)).collect()),
    }
}

pub fn problem(p: PrecisionPair, m: usize, n: usize, k: usize, seed: u64) -> HostProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    HostProblem {
        m,
        n,
        k,
        a: random(p, false, m * k, &mut rng),
        b: random(p, false, k * n, &mut rng),
        c: random(p, true, m * n, &mut rng),
    }
}

pub fn view<'a>(hp: &'a HostProblem, cfg: &GemmConfig) -> Problem<'a> {
    Problem { m: hp.m, n: hp.n, k: hp.k, a: &hp.a, b: &hp.b, c: &hp.c, alpha: cfg.alpha, beta: cfg.beta }
}

pub fn tolerance(p: PrecisionPair) -> f64 {
    match p {
        PrecisionPair::F32 => 1e-5,
        PrecisionPair::F64 => 1e-12,
        PrecisionPair::F16F32 => 1e-2,
        PrecisionPair::I8I32 => 0.0,
    }
}

/// Check `got` against both oracles: bitwise against the kernel-order
/// replay and within tolerance (exact for integers) against the plain one.
pub fn check(cfg: &GemmConfig, hp: &HostProblem, got: &HostMatrix, report: &RunReport) {
    let pv = view(hp, cfg);
    let blocks = report.tiling.k_blocks(hp.k);
    let replay = oracle::same_order(cfg.precision, &pv, &blocks);
    assert_eq!(got.to_bits(), replay.to_bits(), "{} {:?} {}x{}x{} blocks {:?}", cfg.precision, cfg.layout, hp.m, hp.n, hp.k, blocks);
    if let (HostMatrix::I8(a), HostMatrix::I8(b), HostMatrix::I32(c), HostMatrix::I32(g)) = (&hp.a, &hp.b, &hp.c, got) {
        let want = oracle::reference_i32(hp.m, hp.n, hp.k, a, b, c, cfg.alpha as i32, cfg.beta as i32);
        assert_eq!(g, &want);
    } else {
        let (want, scale) = oracle::reference_f64(&pv);
        let err = oracle::max_rel_error(&got.to_f64(), &want, &scale);
        assert!(err <= tolerance(cfg.precision), "{}: relative error {err}", cfg.precision);
    }
}
