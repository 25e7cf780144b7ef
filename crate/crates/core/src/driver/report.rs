//! Run summary returned by the driver.

use serde::{Deserialize, Serialize};

use super::{Ablation, ResolvedTiling};
use crate::dtype::{Layout, PrecisionPair};
use crate::memsim::MemStats;
use crate::vsme::InstrStats;

/// One work item of a multi-unit run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    /// Position in the task queue.
    pub ticket: usize,
    pub unit: usize,
    pub ic: usize,
    pub jc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub precision: PrecisionPair,
    pub layout: Layout,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub units: usize,
    pub alpha: f64,
    pub beta: f64,
    pub ablation: Ablation,
    pub tiling: ResolvedTiling,
    /// Summed over units.
    pub instr: InstrStats,
    pub mem: MemStats,
    pub per_unit_mem: Vec<MemStats>,
    /// Largest packed-A + packed-B + C block + B source block of any L3 step.
    pub max_block_footprint_bytes: u64,
    pub l2_budget_bytes: u64,
    pub tasks: Vec<TaskRecord>,
    pub trace: Vec<String>,
    pub trace_dropped: u64,
    pub wall_seconds: f64,
}

impl RunReport {
    /// `2 m n k`.
    pub fn useful_flops(&self) -> u64 {
        2 * (self.m * self.n * self.k) as u64
    }

    /// Useful work over the nominal work of all issued outer products.
    pub fn mopa_utilization(&self) -> f64 {
        if self.instr.flops == 0 {
            return 0.0;
        }
        self.useful_flops() as f64 / self.instr.flops as f64
    }

    pub fn l2_miss_rate(&self) -> f64 {
        let t = self.mem.line_touches();
        if t == 0 {
            0.0
        } else {
            self.mem.l2_misses as f64 / t as f64
        }
    }

    pub fn tlb_miss_rate(&self) -> f64 {
        let t = self.mem.tlb_hits + self.mem.tlb_misses;
        if t == 0 {
            0.0
        } else {
            self.mem.tlb_misses as f64 / t as f64
        }
    }
}
