//! Workload runner for the simulated SME GEMM: LLM shape table, irregular
//! sweep, optimization breakdown, and human/JSON reports.

pub mod report;
pub mod runner;
pub mod workloads;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Gemm(#[from] sme_gemm::driver::GemmError),
    #[error(transparent)]
    Mem(#[from] sme_gemm::memsim::MemError),
    #[error(transparent)]
    Plan(#[from] sme_gemm::tiling::PlanError),
    #[error(transparent)]
    Isa(#[from] sme_gemm::vsme::IsaError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
