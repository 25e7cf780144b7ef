//! Scalar reference GEMMs used to check the simulated implementation.
//!
//! [`reference_f64`] is the accuracy oracle: plain triple loop in f64 with a
//! per-element error scale. [`reference_i32`] is exact wrapping integer
//! arithmetic. [`same_order`] replays the rounding sequence of the blocked
//! kernels (per K block, zero padding included), so float results can be
//! compared bit for bit.

use half::f16;

use crate::dtype::PrecisionPair;
use crate::matrix::HostMatrix;
use crate::packing::PanelGeometry;

/// Problem in row-major host form.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub a: &'a HostMatrix,
    pub b: &'a HostMatrix,
    pub c: &'a HostMatrix,
    pub alpha: f64,
    pub beta: f64,
}

/// f64 result and, per element, `|alpha| sum |a||b| + |beta c|`.
pub fn reference_f64(p: &Problem) -> (Vec<f64>, Vec<f64>) {
    let (a, b, c) = (p.a.to_f64(), p.b.to_f64(), p.c.to_f64());
    let mut out = vec![0.0; p.m * p.n];
    let mut scale = vec![0.0; p.m * p.n];
    for i in 0..p.m {
        for j in 0..p.n {
            let (mut s, mut abs) = (0.0, 0.0);
            for l in 0..p.k {
                let x = a[i * p.k + l] * b[l * p.n + j];
                s += x;
                abs += x.abs();
            }
            let cv = if p.beta == 0.0 { 0.0 } else { p.beta * c[i * p.n + j] };
            out[i * p.n + j] = p.alpha * s + cv;
            scale[i * p.n + j] = p.alpha.abs() * abs + cv.abs();
        }
    }
    (out, scale)
}

/// Largest `|got - want| / scale` over all elements. Elements whose scale
/// is zero must match exactly (otherwise the error is infinite).
pub fn max_rel_error(got: &[f64], want: &[f64], scale: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .zip(scale)
        .map(|((&g, &w), &s)| {
            let d = (g - w).abs();
            if d == 0.0 {
                0.0
            } else if s == 0.0 || !d.is_finite() {
                f64::INFINITY
            } else {
                d / s
            }
        })
        .fold(0.0, f64::max)
}

/// Wrapping `alpha * A * B + beta * C` for i8 inputs and i32 output.
#[allow(clippy::too_many_arguments)]
pub fn reference_i32(m: usize, n: usize, k: usize, a: &[i8], b: &[i8], c: &[i32], alpha: i32, beta: i32) -> Vec<i32> {
    let mut out = vec![0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0i32;
            for l in 0..k {
                s = s.wrapping_add(a[i * k + l] as i32 * b[l * n + j] as i32);
            }
            out[i * n + j] = alpha.wrapping_mul(s).wrapping_add(beta.wrapping_mul(c[i * n + j]));
        }
    }
    out
}

/// Accumulator arithmetic of one precision.
trait Acc: Copy {
    fn zero() -> Self;
    fn from_f64(v: f64) -> Self;
    fn add(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
}

impl Acc for f32 {
    fn zero() -> Self {
        0.0
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
}

impl Acc for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
}

impl Acc for i32 {
    fn zero() -> Self {
        0
    }
    fn from_f64(v: f64) -> Self {
        v as i32
    }
    fn add(self, o: Self) -> Self {
        self.wrapping_add(o)
    }
    fn mul(self, o: Self) -> Self {
        self.wrapping_mul(o)
    }
}

/// Blocked update with the kernel's rounding order. `unit_sum(i, j, l0, end)`
/// returns the contribution of the packing unit starting at K element
/// `l0`; elements at or past `end` are padding.
#[allow(clippy::too_many_arguments)]
fn blocked<T: Acc>(
    m: usize,
    n: usize,
    k: usize,
    c: &[T],
    alpha: f64,
    beta: f64,
    group: usize,
    kcu_for: impl Fn(usize) -> usize,
    k_blocks: &[usize],
    unit_sum: impl Fn(usize, usize, usize, usize) -> T,
) -> Vec<T> {
    assert_eq!(k_blocks.iter().sum::<usize>(), k, "K blocks must cover K");
    let (al, be) = (T::from_f64(alpha), T::from_f64(beta));
    let mut out = c.to_vec();
    let mut pc = 0;
    for (bi, &kb) in k_blocks.iter().enumerate() {
        let beta_b = if bi == 0 { beta } else { 1.0 };
        let units = kcu_for(kb);
        for i in 0..m {
            for j in 0..n {
                let cur = out[i * n + j];
                let old = if beta_b == 1.0 { cur } else { be.mul(cur) };
                let fused = alpha == 1.0;
                let mut acc = if fused && beta_b != 0.0 { old } else { T::zero() };
                for u in 0..units {
                    acc = acc.add(unit_sum(i, j, pc + u * group, pc + kb));
                }
                out[i * n + j] = if fused {
                    acc
                } else {
                    let r = al.mul(acc);
                    if beta_b != 0.0 {
                        r.add(old)
                    } else {
                        r
                    }
                };
            }
        }
        pc += kb;
    }
    out
}

/// Kernel-order result for the given K block sizes. Unit boundaries past
/// the end of a block contribute an exact zero product.
pub fn same_order(
    precision: PrecisionPair,
    p: &Problem,
    k_blocks: &[usize],
) -> HostMatrix {
    let geom = PanelGeometry::new(precision, 512);
    let g = geom.k_group();
    let kcu = |kb: usize| geom.kcu_for(kb);
    let (m, n, k) = (p.m, p.n, p.k);
    match (precision, p.a, p.b, p.c) {
        (PrecisionPair::F32, HostMatrix::F32(a), HostMatrix::F32(b), HostMatrix::F32(c)) => {
            HostMatrix::F32(blocked(m, n, k, c, p.alpha, p.beta, g, kcu, k_blocks, |i, j, l, end| {
                if l < end {
                    a[i * k + l] * b[l * n + j]
                } else {
                    0.0
                }
            }))
        }
        (PrecisionPair::F64, HostMatrix::F64(a), HostMatrix::F64(b), HostMatrix::F64(c)) => {
            HostMatrix::F64(blocked(m, n, k, c, p.alpha, p.beta, g, kcu, k_blocks, |i, j, l, end| {
                if l < end {
                    a[i * k + l] * b[l * n + j]
                } else {
                    0.0
                }
            }))
        }
        (PrecisionPair::F16F32, HostMatrix::F16(a), HostMatrix::F16(b), HostMatrix::F32(c)) => {
            let prod = |i: usize, j: usize, l: usize| -> f32 {
                let (x, y) = (a[i * k + l], b[l * n + j]);
                x.to_f32() * y.to_f32()
            };
            HostMatrix::F32(blocked(m, n, k, c, p.alpha, p.beta, g, kcu, k_blocks, |i, j, l, end| {
                let p0 = if l < end { prod(i, j, l) } else { 0.0 };
                let p1 = if l + 1 < end { prod(i, j, l + 1) } else { 0.0 };
                p0 + p1
            }))
        }
        (PrecisionPair::I8I32, HostMatrix::I8(a), HostMatrix::I8(b), HostMatrix::I32(c)) => {
            HostMatrix::I32(blocked(m, n, k, c, p.alpha, p.beta, g, kcu, k_blocks, |i, j, l, end| {
                (0..g)
                    .filter(|&d| l + d < end)
                    .fold(0i32, |s, d| s.wrapping_add(a[i * k + l + d] as i32 * b[(l + d) * n + j] as i32))
            }))
        }
        _ => panic!("operand types do not match {precision}"),
    }
}

/// Round an f64 matrix to f16 (for generating f16 inputs).
pub fn to_f16(v: &[f64]) -> Vec<f16> {
    v.iter().map(|&x| f16::from_f64(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_f64_reference() {
        let a = HostMatrix::F64(vec![1.0, 2.0, 3.0, 4.0]);
        let b = HostMatrix::F64(vec![5.0, 6.0, 7.0, 8.0]);
        let c = HostMatrix::F64(vec![1.0, 1.0, 1.0, 1.0]);
        let p = Problem { m: 2, n: 2, k: 2, a: &a, b: &b, c: &c, alpha: 1.0, beta: -1.0 };
        let (r, s) = reference_f64(&p);
        assert_eq!(r, vec![18.0, 21.0, 42.0, 49.0]);
        assert_eq!(s[0], 5.0 + 14.0 + 1.0);
    }

    #[test]
    fn wrapping_integer_reference() {
        let r = reference_i32(1, 1, 2, &[-128, -128], &[-128, -128], &[i32::MAX], 1, 1);
        assert_eq!(r, vec![i32::MAX.wrapping_add(32768)]);
    }

    #[test]
    fn same_order_agrees_on_exact_data() {
        let a = HostMatrix::F32((0..12).map(|x| x as f32).collect());
        let b = HostMatrix::F32((0..12).map(|x| (x % 5) as f32).collect());
        let c = HostMatrix::F32(vec![2.0; 9]);
        let p = Problem { m: 3, n: 3, k: 4, a: &a, b: &b, c: &c, alpha: 2.0, beta: 0.5 };
        let (want, _) = reference_f64(&p);
        for blocks in [vec![4], vec![1, 3], vec![2, 1, 1]] {
            assert_eq!(same_order(PrecisionPair::F32, &p, &blocks).to_f64(), want);
        }
    }

    #[test]
    fn relative_error_treats_zero_scale_strictly() {
        assert_eq!(max_rel_error(&[1.0, 2.0], &[1.0, 2.5], &[1.0, 5.0]), 0.1);
        assert_eq!(max_rel_error(&[1.0], &[0.0], &[0.0]), f64::INFINITY);
    }
}
