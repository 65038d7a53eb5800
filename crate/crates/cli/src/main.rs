use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hartree_cli::commands::{self, Status};
use hartree_cli::config::{check_config, read_config, Experiment, RunConfig};
use hartree_cli::output::RunWriter;

/// Ground states and dynamics of coupled nonlocal Hartree systems.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the assumption clauses and their margins.
    Validate(Common),
    /// Compute a ground state and write its snapshot and sidecar.
    Minimize(Common),
    /// Evolve from the ground state (optionally perturbed) and write the trace.
    Evolve(Common),
    /// Subadditivity scan over mass pairs.
    Scan(Common),
    /// Orbit distance of perturbed ground states over time.
    Stability(Common),
    /// Structural checks on the minimizer; nonzero exit if any fails.
    CheckLemmas(Common),
    /// Run whatever `experiment` the config names.
    Run(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to HARTREE_WORKERS, then to all cores.
    #[arg(long)]
    workers: Option<usize>,
}

fn workers(flag: Option<usize>) -> Result<usize> {
    if let Some(w) = flag {
        return Ok(w);
    }
    match std::env::var("HARTREE_WORKERS") {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("HARTREE_WORKERS={v:?} is not a count")),
        Err(_) => Ok(0),
    }
}

fn execute(cli: Cli) -> Result<Status> {
    let (experiment, common) = match cli.command {
        Command::Validate(c) => (Some(Experiment::Validate), c),
        Command::Minimize(c) => (Some(Experiment::Minimize), c),
        Command::Evolve(c) => (Some(Experiment::Evolve), c),
        Command::Scan(c) => (Some(Experiment::ScanSubadditivity), c),
        Command::Stability(c) => (Some(Experiment::Stability), c),
        Command::CheckLemmas(c) => (Some(Experiment::LemmaChecks), c),
        Command::Run(c) => (None, c),
    };
    let (mut cfg, raw): (RunConfig, Vec<u8>) = read_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = common.out {
        cfg.output_dir = out;
    }
    let experiment = experiment.unwrap_or(cfg.experiment);
    cfg.experiment = experiment;
    if experiment != Experiment::Validate {
        check_config(&cfg)?;
    }

    let threads = workers(common.workers)?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()?;
    }

    let mut out = RunWriter::create(&cfg.output_dir)?;
    let name = common
        .config
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "config.json".into());
    out.record_input(&name, &raw);
    let status = match experiment {
        Experiment::Validate => commands::validate(&cfg, &mut out)?,
        Experiment::Minimize => commands::minimize(&cfg, &mut out)?,
        Experiment::Evolve => commands::evolve_run(&cfg, &mut out)?,
        Experiment::ScanSubadditivity => commands::scan(&cfg, &mut out)?,
        Experiment::Stability => commands::stability(&cfg, &mut out)?,
        Experiment::LemmaChecks => commands::lemma_checks(&cfg, &mut out)?,
    };
    let label = serde_json::to_value(experiment)?;
    out.finish(label.as_str().unwrap_or("run"), &cfg)?;
    Ok(status)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(Status::Passed) => ExitCode::SUCCESS,
        Ok(Status::AssertionFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
