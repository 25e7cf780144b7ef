use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Per-instruction event counters of one simulated unit.
///
/// Group-indexed arrays are ordered by register group size 1, 2, 4.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrStats {
    pub loads_by_group: [u64; 3],
    /// Subset of `loads_by_group` issued while the machine was in edge scope.
    pub edge_loads_by_group: [u64; 3],
    pub stores_by_group: [u64; 3],
    pub fmopa_f32: u64,
    pub fmopa_f64: u64,
    pub fmopa_f16w: u64,
    pub fmopa_bf16w: u64,
    pub smopa_i8w: u64,
    pub smopa_i16w32: u64,
    pub smopa_i16w64: u64,
    /// Nominal arithmetic operations of all outer-product instructions.
    pub flops: u64,
    pub mova_slices: u64,
    pub zips: u64,
    pub zero_za: u64,
    pub vector_alu: u64,
    pub bytes_loaded: u64,
    pub bytes_stored: u64,
    pub main_kernels: u64,
    pub edge_kernels: u64,
    /// Histogram of distinct accumulator tiles touched per kernel invocation.
    pub tiles_touched_hist: [u64; 17],
}

pub(crate) fn group_index(group: usize) -> usize {
    match group {
        1 => 0,
        2 => 1,
        _ => 2,
    }
}

impl InstrStats {
    pub fn loads(&self) -> u64 {
        self.loads_by_group.iter().sum()
    }

    pub fn loads_with_group(&self, group: usize) -> u64 {
        self.loads_by_group[group_index(group)]
    }

    pub fn interior_loads_by_group(&self) -> [u64; 3] {
        std::array::from_fn(|i| self.loads_by_group[i] - self.edge_loads_by_group[i])
    }

    /// Fraction of non-edge loads that moved four registers at once.
    /// `None` when there were no interior loads.
    pub fn interior_group4_fraction(&self) -> Option<f64> {
        let interior = self.interior_loads_by_group();
        let total: u64 = interior.iter().sum();
        (total > 0).then(|| interior[2] as f64 / total as f64)
    }

    pub fn mopa_total(&self) -> u64 {
        self.fmopa_f32
            + self.fmopa_f64
            + self.fmopa_f16w
            + self.fmopa_bf16w
            + self.smopa_i8w
            + self.smopa_i16w32
            + self.smopa_i16w64
    }

    pub fn kernels(&self) -> u64 {
        self.main_kernels + self.edge_kernels
    }
}

impl AddAssign<&InstrStats> for InstrStats {
    fn add_assign(&mut self, o: &InstrStats) {
        for i in 0..3 {
            self.loads_by_group[i] += o.loads_by_group[i];
            self.edge_loads_by_group[i] += o.edge_loads_by_group[i];
            self.stores_by_group[i] += o.stores_by_group[i];
        }
        self.fmopa_f32 += o.fmopa_f32;
        self.fmopa_f64 += o.fmopa_f64;
        self.fmopa_f16w += o.fmopa_f16w;
        self.fmopa_bf16w += o.fmopa_bf16w;
        self.smopa_i8w += o.smopa_i8w;
        self.smopa_i16w32 += o.smopa_i16w32;
        self.smopa_i16w64 += o.smopa_i16w64;
        self.flops += o.flops;
        self.mova_slices += o.mova_slices;
        self.zips += o.zips;
        self.zero_za += o.zero_za;
        self.vector_alu += o.vector_alu;
        self.bytes_loaded += o.bytes_loaded;
        self.bytes_stored += o.bytes_stored;
        self.main_kernels += o.main_kernels;
        self.edge_kernels += o.edge_kernels;
        for (a, b) in self.tiles_touched_hist.iter_mut().zip(o.tiles_touched_hist) {
            *a += b;
        }
    }
}

impl AddAssign for InstrStats {
    fn add_assign(&mut self, o: InstrStats) {
        *self += &o;
    }
}

impl Add for InstrStats {
    type Output = InstrStats;

    fn add(mut self, o: InstrStats) -> InstrStats {
        self += &o;
        self
    }
}

impl std::iter::Sum for InstrStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(InstrStats::default(), Add::add)
    }
}
