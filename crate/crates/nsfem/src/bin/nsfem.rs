use clap::{Args, Parser, Subcommand};
use nsfem::config::{parse_config_file, ExperimentConfig, Mode};
use nsfem::experiment::{dump_mesh, run_experiment};
use nsfem::{Error, Result};
use std::path::PathBuf;
use std::process::ExitCode;

/// Finite element solver for the 2d incompressible Navier-Stokes equations
/// on the unit square: one-level and two-level backward Euler schemes with
/// convergence and singularity studies.
#[derive(Parser)]
#[command(name = "nsfem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Key = value configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's output_dir)
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Concurrency bound for study cells
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Force sequential execution for byte-reproducible artifacts
    #[arg(long)]
    deterministic: bool,
    /// Seed for randomized checks, echoed into reports
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the mode named in the config (galerkin when none is given)
    Run(CommonOpts),
    /// Run a convergence or singularity study
    Study(CommonOpts),
    /// Compare the two-level method against one-level on the same fine mesh
    Compare(CommonOpts),
    /// Write the finest configured mesh as CSV tables
    DumpMesh(CommonOpts),
}

fn load_config(
    opts: &CommonOpts,
    implied: Mode,
    allowed: &[Mode],
) -> Result<ExperimentConfig> {
    let mut cfg = match &opts.config {
        Some(path) => parse_config_file(path)?,
        None => ExperimentConfig::with_mode(implied),
    };
    if !allowed.is_empty() && !allowed.contains(&cfg.mode) {
        let names: Vec<&str> = allowed.iter().map(|m| m.name()).collect();
        return Err(Error::Config(format!(
            "config mode `{}` does not fit this subcommand (expected {})",
            cfg.mode.name(),
            names.join(" or ")
        )));
    }
    if let Some(dir) = &opts.output {
        cfg.output_dir = dir.clone();
    }
    if let Some(jobs) = opts.jobs {
        cfg.jobs = jobs;
    }
    if opts.deterministic {
        cfg.deterministic = true;
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(opts: &CommonOpts, implied: Mode, allowed: &[Mode]) -> Result<bool> {
    let cfg = load_config(opts, implied, allowed)?;
    let outcome = run_experiment(&cfg)?;
    println!("wrote {}", outcome.report_path.display());
    for path in &outcome.artifacts {
        println!("wrote {}", path.display());
    }
    for c in &outcome.checks {
        println!(
            "[{}] {}: {}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(outcome.all_passed())
}

fn dump(opts: &CommonOpts) -> Result<bool> {
    let cfg = load_config(opts, Mode::Galerkin, &[])?;
    for path in dump_mesh(&cfg)? {
        println!("wrote {}", path.display());
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(o) => execute(o, Mode::Galerkin, &[]),
        Command::Study(o) => execute(
            o,
            Mode::ConvergenceStudy,
            &[Mode::ConvergenceStudy, Mode::SingularityStudy],
        ),
        Command::Compare(o) => execute(o, Mode::Comparison, &[Mode::Comparison]),
        Command::DumpMesh(o) => dump(o),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("rate checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
