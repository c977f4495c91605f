use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fspde_core::cli_runner::{exit, exit_code, parse_config, run_experiment, Family};

#[derive(Parser)]
#[command(name = "fspde", version, about = "Delay SPDE experiments: conditions, couplings, tail bounds, ergodic statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `run.workers`.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form condition checks.
    Check(Common),
    /// Simulate paths and record sup-norms.
    Simulate(Common),
    /// Synchronous coupling of two initial data.
    Couple(Common),
    /// Change-of-measure coupling and Harnack inequality check.
    Harnack(Common),
    /// Fernique coefficients and empirical sup tails.
    Fernique(Common),
    /// Contraction-rate fit and W-Cauchy gaps.
    Contract(Common),
    /// Exponential-moment table.
    Concentrate(Common),
    /// Invariant-measure summary.
    Invariant(Common),
    /// Every experiment listed in `checks.experiments`.
    Run(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (family, common) = match cli.command {
        Command::Check(c) => (Some(Family::Check), c),
        Command::Simulate(c) => (Some(Family::Simulate), c),
        Command::Couple(c) => (Some(Family::Couple), c),
        Command::Harnack(c) => (Some(Family::Harnack), c),
        Command::Fernique(c) => (Some(Family::Fernique), c),
        Command::Contract(c) => (Some(Family::Contract), c),
        Command::Concentrate(c) => (Some(Family::Concentrate), c),
        Command::Invariant(c) => (Some(Family::Invariant), c),
        Command::Run(c) => (None, c),
    };
    let result = parse_config(&common.config).and_then(|mut cfg| {
        if let Some(s) = common.seed {
            cfg.run.seed = s;
        }
        if let Some(w) = common.workers {
            cfg.run.workers = Some(w);
        }
        cfg.validate()?;
        let fams: Vec<Family> = family.into_iter().collect();
        run_experiment(&cfg, &fams, common.out.as_deref())
    });
    match result {
        Ok(manifest) => {
            for f in &manifest.files {
                println!("{f}");
            }
            if manifest.conditions_passed {
                ExitCode::from(exit::SUCCESS as u8)
            } else {
                eprintln!("fspde: at least one condition check failed");
                ExitCode::from(exit::CONDITION_FAILED as u8)
            }
        }
        Err(e) => {
            eprintln!("fspde: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
