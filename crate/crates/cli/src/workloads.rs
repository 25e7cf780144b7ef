//! Built-in LLM GEMM shapes and workload files.

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Unscaled `(id, m, n, k)` rows: DeepSeek projections (1-18), LLaMA (19-24).
pub const TABLE: [(u32, usize, usize, usize); 24] = [
    (1, 64, 2112, 7168),
    (2, 64, 24576, 1536),
    (3, 64, 32768, 512),
    (4, 64, 7168, 16384),
    (5, 64, 4096, 7168),
    (6, 64, 7168, 2048),
    (7, 128, 2112, 7168),
    (8, 128, 24576, 1536),
    (9, 128, 32768, 512),
    (10, 128, 7168, 16384),
    (11, 128, 4096, 7168),
    (12, 128, 7168, 2048),
    (13, 4096, 2112, 7168),
    (14, 4096, 24576, 1536),
    (15, 4096, 32768, 512),
    (16, 4096, 7168, 16384),
    (17, 4096, 4096, 7168),
    (18, 4096, 7168, 2048),
    (19, 4096, 256, 4096),
    (20, 11008, 256, 4096),
    (21, 4096, 256, 11008),
    (22, 5120, 256, 5120),
    (23, 13824, 256, 5120),
    (24, 5120, 256, 13824),
];

/// One GEMM shape, already divided by `scale` (rounded up).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub id: u32,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub scale: usize,
}

impl WorkloadSpec {
    pub fn scaled(id: u32, (m, n, k): (usize, usize, usize), scale: usize) -> Result<Self, CliError> {
        if scale == 0 {
            return Err(CliError::Usage("scale divisor must be positive".into()));
        }
        if m == 0 || n == 0 || k == 0 {
            return Err(CliError::Usage(format!("workload {id} has a zero dimension")));
        }
        Ok(WorkloadSpec { id, m: m.div_ceil(scale), n: n.div_ceil(scale), k: k.div_ceil(scale), scale })
    }

    pub fn label(&self) -> String {
        format!("id{}", self.id)
    }
}

pub fn builtin(id: u32, scale: usize) -> Result<WorkloadSpec, CliError> {
    let &(_, m, n, k) = TABLE
        .iter()
        .find(|r| r.0 == id)
        .ok_or_else(|| CliError::Usage(format!("unknown workload id {id} (built-in ids are 1-24)")))?;
    WorkloadSpec::scaled(id, (m, n, k), scale)
}

pub fn builtin_all(scale: usize) -> Result<Vec<WorkloadSpec>, CliError> {
    TABLE.iter().map(|r| builtin(r.0, scale)).collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRow {
    id: u32,
    m: usize,
    n: usize,
    k: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadFile {
    workload: Vec<FileRow>,
}

/// Parse a TOML list of `[[workload]]` tables with `id`, `m`, `n`, `k`.
pub fn parse_file(text: &str, scale: usize) -> Result<Vec<WorkloadSpec>, CliError> {
    let f: WorkloadFile = toml::from_str(text).map_err(|e| CliError::Usage(format!("workload file: {e}")))?;
    f.workload.iter().map(|r| WorkloadSpec::scaled(r.id, (r.m, r.n, r.k), scale)).collect()
}
