use proptest::prelude::*;
use sme_gemm::kernels::{run_kernel, BSource, CTile, KernelShape, MicroTask};
use sme_gemm::memsim::MemoryImage;
use sme_gemm::packing::PanelGeometry;
use sme_gemm::vsme::MachineState;
use sme_gemm::PrecisionPair;

const A_BASE: u64 = 0;
const B_BASE: u64 = 1 << 20;
const C_BASE: u64 = 2 << 20;
const C_LD: usize = 300;

/// Place small-integer operands, run one kernel and return the C area.
/// Values are exact in every precision, so the expected result is plain
/// integer arithmetic.
#[allow(clippy::too_many_arguments)]
fn run(
    p: PrecisionPair,
    shape: KernelShape,
    rows: usize,
    cols: usize,
    kcu: usize,
    alpha: i32,
    beta: i32,
    seed: u64,
    group: usize,
) -> (Vec<i64>, Vec<i64>) {
    let geom = PanelGeometry::new(p, 512);
    let (t, g, nr) = (geom.panel_rows(), geom.k_group(), geom.nr());
    let ub = geom.unit_bytes();
    let eb = ub / g;
    let k = kcu * g;
    let mem = MemoryImage::new(3 << 20);
    let val = |x: u64| ((x.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 59) as i64) - 16;
    let write = |addr: u64, v: i64, bytes: usize| match (p, bytes) {
        (PrecisionPair::F32, _) | (PrecisionPair::F16F32, 4) => mem.write_lanes(addr, &[v as f32]).unwrap(),
        (PrecisionPair::F64, _) => mem.write_lanes(addr, &[v as f64]).unwrap(),
        (PrecisionPair::F16F32, _) => mem.write_lanes(addr, &[half::f16::from_f32(v as f32)]).unwrap(),
        (PrecisionPair::I8I32, 1) => mem.write_lanes(addr, &[v as i8]).unwrap(),
        (PrecisionPair::I8I32, _) => mem.write_lanes(addr, &[v as i32]).unwrap(),
    };
    let read = |addr: u64| -> i64 {
        match p {
            PrecisionPair::F64 => mem.read_lanes::<f64>(addr, 1).unwrap()[0] as i64,
            PrecisionPair::I8I32 => mem.read_lanes::<i32>(addr, 1).unwrap()[0] as i64,
            _ => mem.read_lanes::<f32>(addr, 1).unwrap()[0] as i64,
        }
    };
    // Four A panels (edge kernels read all of them) and one B panel.
    let a_stride = geom.a_panel_bytes(kcu);
    let a = |i: usize, l: usize| val(seed ^ ((i * 1000 + l) as u64));
    let b = |l: usize, j: usize| val(seed.rotate_left(17) ^ ((l * 1000 + j) as u64 + 7));
    for i in 0..4 * t {
        for l in 0..k {
            write(A_BASE + geom.a_unit_offset(kcu, i, l / g) + ((l % g) * eb) as u64, a(i, l), eb);
        }
    }
    for l in 0..k {
        for j in 0..nr {
            write(B_BASE + geom.b_unit_offset(kcu, l / g, j) + ((l % g) * eb) as u64, b(l, j), eb);
        }
    }
    let ob = p.output().bytes();
    let c_at = |i: usize, j: usize| C_BASE + ((i * C_LD + j) * ob) as u64;
    let c0 = |i: usize, j: usize| val(seed.wrapping_add((i * C_LD + j) as u64));
    for i in 0..4 * t + 2 {
        for j in 0..C_LD {
            write(c_at(i, j), c0(i, j), ob);
        }
    }
    let col_offset = if shape == KernelShape::Edge { t } else { 0 };
    let task = MicroTask {
        precision: p,
        shape,
        a_panel: A_BASE,
        a_panel_stride: a_stride,
        b: BSource::Packed { panel: B_BASE, col_offset },
        c: CTile { addr: c_at(1, 3), ld: C_LD, rows, cols },
        kcu,
        alpha: alpha as f64,
        beta: beta as f64,
    };
    let mut m = MachineState::with_defaults();
    run_kernel(&mut m, &mem, &task, group).unwrap();

    let mut got = Vec::new();
    let mut want = Vec::new();
    for i in 0..4 * t + 2 {
        for j in 0..C_LD {
            got.push(read(c_at(i, j)));
            let inside = (1..1 + rows).contains(&i) && (3..3 + cols).contains(&j);
            want.push(if inside {
                let (ii, jj) = (i - 1, j - 3 + col_offset);
                let dot: i64 = (0..k).map(|l| a(ii, l) * b(l, jj)).sum();
                alpha as i64 * dot + beta as i64 * c0(i, j)
            } else {
                c0(i, j)
            });
        }
    }
    (got, want)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn main_kernel_updates_exactly_its_tile(
        pi in 0usize..4, rf in 0.0f64..1.0, cf in 0.0f64..1.0, steps in 1usize..3,
        alpha in -2i32..3, beta in -2i32..3, seed in any::<u64>(), group in prop::sample::select(vec![1usize, 4]),
    ) {
        let p = [PrecisionPair::F32, PrecisionPair::F64, PrecisionPair::F16F32, PrecisionPair::I8I32][pi];
        let t = PanelGeometry::new(p, 512).panel_rows();
        let rows = 1 + (rf * t as f64) as usize % t;
        let cols = 1 + (cf * 4.0 * t as f64) as usize % (4 * t);
        let (got, want) = run(p, KernelShape::Main, rows, cols, 16 * steps, alpha, beta, seed, group);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn edge_kernel_updates_exactly_its_tile(
        pi in 0usize..4, rf in 0.0f64..1.0, cf in 0.0f64..1.0,
        alpha in -2i32..3, beta in -2i32..3, seed in any::<u64>(),
    ) {
        let p = [PrecisionPair::F32, PrecisionPair::F64, PrecisionPair::F16F32, PrecisionPair::I8I32][pi];
        let t = PanelGeometry::new(p, 512).panel_rows();
        let rows = 1 + (rf * 4.0 * t as f64) as usize % (4 * t);
        let cols = 1 + (cf * t as f64) as usize % t;
        let (got, want) = run(p, KernelShape::Edge, rows, cols, 16, alpha, beta, seed, 4);
        prop_assert_eq!(got, want);
    }
}
