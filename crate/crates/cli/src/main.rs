use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sme_gemm::driver::{Ablation, GemmConfig};
use sme_gemm::memsim::SystemProfile;
use sme_gemm::{Layout, PrecisionPair};
use sme_gemm_cli::runner::{self, RunRecord};
use sme_gemm_cli::workloads::{self, WorkloadSpec};
use sme_gemm_cli::{report, CliError};

/// Run GEMM workloads on the simulated SME machine and check them against
/// scalar oracles.
#[derive(Debug, Parser)]
#[command(name = "sme-gemm", version)]
struct Args {
    /// Built-in workload ids (1-24), comma separated, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    workload: Vec<String>,
    /// TOML file of `[[workload]]` tables (id, m, n, k) used instead of the built-in table.
    #[arg(long)]
    workload_file: Option<PathBuf>,
    /// Divide every workload dimension by this (rounding up).
    #[arg(long, default_value_t = 16)]
    scale: usize,
    /// Precisions: f32, f64, f16, i8 (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "f32")]
    dtype: Vec<PrecisionPair>,
    /// Storage order of A, B and C: row or col.
    #[arg(long, default_value = "row")]
    layout: Layout,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    beta: f64,
    /// Simulated units (default: the profile's unit count).
    #[arg(long)]
    units: Option<usize>,
    /// Hardware profile TOML file.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Run the four-row optimization breakdown for each selected workload.
    #[arg(long)]
    ablate: bool,
    /// Run the 5x5 irregular M/N sweep instead of the workload table.
    #[arg(long)]
    sweep_irregular: bool,
    /// K of the irregular sweep.
    #[arg(long, default_value_t = runner::DEFAULT_SWEEP_K)]
    sweep_k: usize,
    /// Single cache block covering the whole problem
    #[arg(long)]
    no_blocking: bool,
    /// Single-register loads and stores
    #[arg(long)]
    no_four_way: bool,
    /// Pack each B block before its first use instead of during it
    #[arg(long)]
    no_online_pack: bool,
    /// Seed for operand initialization.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Shuffle the multi-unit work queue with this seed.
    #[arg(long)]
    queue_seed: Option<u64>,
    /// Record up to this many instructions of unit 0 in each report.
    #[arg(long)]
    trace: Option<usize>,
    /// Directory for JSON reports.
    #[arg(long, default_value = "sme-gemm-reports")]
    out: PathBuf,
    /// Print the tiling plan and constraint slack, then exit.
    #[arg(long)]
    explain: bool,
    /// Write the packed first blocks of A and B of the first workload to this directory.
    #[arg(long)]
    dump_packed: Option<PathBuf>,
}

fn select_workloads(args: &Args) -> Result<Vec<WorkloadSpec>, CliError> {
    if let Some(path) = &args.workload_file {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        return workloads::parse_file(&text, args.scale);
    }
    if args.workload.iter().any(|w| w == "all") {
        return workloads::builtin_all(args.scale);
    }
    args.workload
        .iter()
        .map(|w| {
            let id = w.parse::<u32>().map_err(|_| CliError::Usage(format!("bad workload id `{w}`")))?;
            workloads::builtin(id, args.scale)
        })
        .collect()
}

fn run(args: &Args) -> Result<bool, CliError> {
    let profile = match &args.profile {
        Some(p) => SystemProfile::load(p)?,
        None => SystemProfile::default(),
    };
    profile.validate()?;
    if args.explain {
        print!("{}", report::explain_all(&args.dtype, args.layout, &profile)?);
        return Ok(true);
    }
    let specs = if args.sweep_irregular { Vec::new() } else { select_workloads(args)? };
    let ablation = Ablation { blocking: !args.no_blocking, four_way: !args.no_four_way, online_pack: !args.no_online_pack };
    let mut all: Vec<RunRecord> = Vec::new();
    let mut ok = true;
    for &precision in &args.dtype {
        let cfg = GemmConfig {
            precision,
            alpha: args.alpha,
            beta: args.beta,
            layout: args.layout,
            units: args.units.unwrap_or(profile.units),
            ablation,
            tiling: None,
            queue_seed: args.queue_seed,
            trace_limit: args.trace,
        };
        if args.sweep_irregular {
            let recs = runner::run_irregular_sweep(args.sweep_k, &cfg, &profile, args.seed)?;
            print!("{}", report::table(&recs));
            all.extend(recs);
        } else if args.ablate {
            for w in &specs {
                let a = runner::run_ablation(&w.label(), &cfg, &profile, (w.m, w.n, w.k), runner::run_seed(args.seed, w.id as u64))?;
                print!("{}", report::ablation_table(&a));
                all.extend(a.rows);
            }
        } else {
            let recs = runner::run_workloads(&specs, &cfg, &profile, args.seed)?;
            print!("{}", report::table(&recs));
            all.extend(recs);
        }
        if let (Some(dir), Some(w)) = (&args.dump_packed, specs.first()) {
            let sub = dir.join(precision.label());
            runner::dump_packed(&sub, &cfg, &profile, (w.m, w.n, w.k), runner::run_seed(args.seed, w.id as u64))?;
            println!("packed blocks of {} written to {}", w.label(), sub.display());
        }
    }
    ok &= all.iter().all(RunRecord::passed);
    report::write_records(&args.out, "", &all)?;
    println!("reports written to {}", args.out.display());
    Ok(ok)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some runs failed their oracle check");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
