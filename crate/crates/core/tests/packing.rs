use half::f16;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sme_gemm::dtype::Lane;
use sme_gemm::matrix::{store_matrix, HostMatrix};
use sme_gemm::memsim::MemoryImage;
use sme_gemm::packing::{pack_a, pack_b, pack_b_chunk, read_dump, unpack_a, unpack_b, write_dump, DumpHeader, PanelGeometry};
use sme_gemm::vsme::MachineState;
use sme_gemm::{Layout, PrecisionPair};

const ALL: [PrecisionPair; 4] = [PrecisionPair::F32, PrecisionPair::F64, PrecisionPair::F16F32, PrecisionPair::I8I32];

/// Unit width in elements, element bytes, A panel height and B panel width
/// at a 512-bit vector length, written out per precision.
fn shape(p: PrecisionPair) -> (usize, usize, usize, usize) {
    match p {
        PrecisionPair::F32 => (1, 4, 16, 64),
        PrecisionPair::F64 => (1, 8, 8, 32),
        PrecisionPair::F16F32 => (2, 2, 16, 64),
        PrecisionPair::I8I32 => (4, 1, 16, 64),
    }
}

/// Scalar packer: A panels are `t` rows tall, units stored column by column.
fn pack_a_oracle(p: PrecisionPair, src: &[u8], ld: usize, rows: usize, kcols: usize, kcu: usize) -> Vec<u8> {
    let (g, eb, t, _) = shape(p);
    let ub = g * eb;
    let panels = rows.div_ceil(t);
    let mut out = vec![0u8; panels * t * kcu * ub];
    for i in 0..rows {
        for k in 0..kcols {
            let off = (i / t) * t * kcu * ub + ((k / g) * t + i % t) * ub + (k % g) * eb;
            out[off..off + eb].copy_from_slice(&src[(i * ld + k) * eb..][..eb]);
        }
    }
    out
}

/// Scalar packer: B panels are `nr` units wide, row-major by unit row; f16
/// panels are two side-by-side halves, each its own row-major array.
fn pack_b_oracle(p: PrecisionPair, src: &[u8], ld: usize, krows: usize, cols: usize, kcu: usize) -> Vec<u8> {
    let (g, eb, _, nr) = shape(p);
    let ub = g * eb;
    let seg_cols = if p == PrecisionPair::F16F32 { nr / 2 } else { nr };
    let panels = cols.div_ceil(nr);
    let mut out = vec![0u8; panels * kcu * nr * ub];
    for k in 0..krows {
        for j in 0..cols {
            let jj = j % nr;
            let off = (j / nr) * kcu * nr * ub + ((jj / seg_cols) * kcu + k / g) * seg_cols * ub + (jj % seg_cols) * ub + (k % g) * eb;
            out[off..off + eb].copy_from_slice(&src[(k * ld + j) * eb..][..eb]);
        }
    }
    out
}

fn random_bytes(p: PrecisionPair, len: usize, seed: u64) -> HostMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match p {
        PrecisionPair::F32 => HostMatrix::F32((0..len).map(|_| rng.gen_range(-9.0..9.0)).collect()),
        PrecisionPair::F64 => HostMatrix::F64((0..len).map(|_| rng.gen_range(-9.0..9.0)).collect()),
        PrecisionPair::F16F32 => HostMatrix::F16((0..len).map(|_| f16::from_f32(rng.gen_range(-9.0..9.0))).collect()),
        PrecisionPair::I8I32 => HostMatrix::I8((0..len).map(|_| rng.gen()).collect()),
    }
}

struct Case {
    mem: MemoryImage,
    src: sme_gemm::matrix::MatrixView,
    raw: Vec<u8>,
    dst: u64,
}

fn case(p: PrecisionPair, rows: usize, cols: usize, seed: u64) -> Case {
    let mut mem = MemoryImage::new(4 << 20);
    let host = random_bytes(p, rows * cols, seed);
    let src = host.store(&mut mem, "src", rows, cols, Layout::Row).unwrap();
    let raw = mem.read_vec(src.base, src.span_bytes()).unwrap();
    let dst = mem.alloc_region("dst", 2 << 20, 128).unwrap();
    Case { mem, src, raw, dst }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pack_a_matches_scalar_layout(
        pi in 0usize..4, rows in 1usize..50, k in 1usize..150, group in prop::sample::select(vec![1usize, 4]), seed in any::<u64>(),
    ) {
        let p = ALL[pi];
        let geom = PanelGeometry::new(p, 512);
        let kcu = geom.kcu_for(k);
        let c = case(p, rows, k, seed);
        let mut m = MachineState::with_defaults();
        pack_a(&mut m, &c.mem, &c.src, (0, 0), (rows, k), kcu, c.dst, group).unwrap();
        let want = pack_a_oracle(p, &c.raw, k, rows, k, kcu);
        prop_assert_eq!(want.len() as u64, geom.ac_bytes(rows, kcu));
        prop_assert_eq!(c.mem.read_vec(c.dst, want.len() as u64).unwrap(), want);
    }

    #[test]
    fn pack_b_matches_scalar_layout(
        pi in 0usize..4, k in 1usize..150, cols in 1usize..300, group in prop::sample::select(vec![1usize, 4]), seed in any::<u64>(),
    ) {
        let p = ALL[pi];
        let geom = PanelGeometry::new(p, 512);
        let kcu = geom.kcu_for(k);
        let c = case(p, k, cols, seed);
        let mut m = MachineState::with_defaults();
        pack_b(&mut m, &c.mem, &c.src, (0, 0), (k, cols), kcu, c.dst, group).unwrap();
        let want = pack_b_oracle(p, &c.raw, cols, k, cols, kcu);
        prop_assert_eq!(want.len() as u64, geom.bc_bytes(cols, kcu));
        prop_assert_eq!(c.mem.read_vec(c.dst, want.len() as u64).unwrap(), want);
    }
}

/// Sub-blocks at an offset inside a larger matrix, and chunk order.
#[test]
fn offset_blocks_and_chunk_order() {
    for p in ALL {
        let geom = PanelGeometry::new(p, 512);
        let (rows, cols) = (90, 700);
        let c = case(p, rows, cols, 7);
        let eb = shape(p).1;
        let (k0, j0, kb, nb) = (13, 37, 70, 600);
        let kcu = geom.kcu_for(kb);
        let sub: Vec<u8> = (k0..k0 + kb).flat_map(|k| c.raw[(k * cols + j0) * eb..(k * cols + j0 + nb) * eb].to_vec()).collect();

        let mut m = MachineState::with_defaults();
        for chunk in (0..geom.b_chunks(nb)).rev() {
            pack_b_chunk(&mut m, &c.mem, &c.src, (k0, j0), (kb, nb), kcu, c.dst, chunk, 4).unwrap();
        }
        let want = pack_b_oracle(p, &sub, nb, kb, nb, kcu);
        let got = c.mem.read_vec(c.dst, want.len() as u64).unwrap();
        assert_eq!(got, want, "{p} B");

        let (i0, mb) = (5, 40);
        pack_a(&mut m, &c.mem, &c.src, (i0, k0), (mb, kb), kcu, c.dst, 2).unwrap();
        let sub_a: Vec<u8> = (i0..i0 + mb).flat_map(|i| c.raw[(i * cols + k0) * eb..(i * cols + k0 + kb) * eb].to_vec()).collect();
        let want = pack_a_oracle(p, &sub_a, kb, mb, kb, kcu);
        assert_eq!(c.mem.read_vec(c.dst, want.len() as u64).unwrap(), want, "{p} A");
    }
}

fn roundtrip<T: Lane>(p: PrecisionPair, data: &[T], rows: usize, cols: usize) {
    let geom = PanelGeometry::new(p, 512);
    let mut mem = MemoryImage::new(1 << 20);
    let src = store_matrix(&mut mem, "src", rows, cols, Layout::Row, data).unwrap();
    let dst = mem.alloc_region("dst", 256 << 10, 128).unwrap();
    let mut m = MachineState::with_defaults();
    let kcu = geom.kcu_for(cols);
    pack_a(&mut m, &mem, &src, (0, 0), (rows, cols), kcu, dst, 4).unwrap();
    let buf = mem.read_vec(dst, geom.ac_bytes(rows, kcu)).unwrap();
    assert_eq!(unpack_a::<T>(&buf, &geom, kcu, rows, cols), data);
    let kcu = geom.kcu_for(rows);
    pack_b(&mut m, &mem, &src, (0, 0), (rows, cols), kcu, dst, 4).unwrap();
    let buf = mem.read_vec(dst, geom.bc_bytes(cols, kcu)).unwrap();
    assert_eq!(unpack_b::<T>(&buf, &geom, kcu, rows, cols), data);
}

#[test]
fn unpack_inverts_pack() {
    roundtrip(PrecisionPair::F32, &(0..33 * 70).map(|x| x as f32).collect::<Vec<_>>(), 33, 70);
    roundtrip(PrecisionPair::F64, &(0..9 * 40).map(|x| -(x as f64)).collect::<Vec<_>>(), 9, 40);
    roundtrip(PrecisionPair::F16F32, &(0..21 * 99).map(|x| f16::from_f32(x as f32)).collect::<Vec<_>>(), 21, 99);
    roundtrip(PrecisionPair::I8I32, &(0..17 * 130).map(|x| x as i8).collect::<Vec<_>>(), 17, 130);
}

#[test]
fn dump_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.pkbf");
    let h = DumpHeader { rows: 3, cols: 5, dtype: sme_gemm::DType::I8, interleave: 4 };
    write_dump(&path, &h, &[1, 2, 3]).unwrap();
    assert_eq!(read_dump(&path).unwrap(), (h, vec![1, 2, 3]));
    std::fs::write(&path, b"nope").unwrap();
    assert!(read_dump(&path).is_err());
}
