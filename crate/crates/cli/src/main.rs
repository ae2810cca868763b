//! `lvfp`: moment orbits, Fokker–Planck runs, distance histories,
//! parameter sweeps and the acceptance suite from one TOML configuration.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::AcceptanceFailed;
use config::{ConfigError, RunConfig};
use lvfp_core::Error;

#[derive(Parser, Debug)]
#[command(name = "lvfp", version, about = "Kinetic Lotka–Volterra Fokker–Planck laboratory")]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set model.p=1`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    #[arg(long, global = true)]
    tag: Option<String>,
    #[arg(long, global = true)]
    outdir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the mean and variance equations from each initial condition.
    Moments,
    /// Run the Fokker–Planck solver and write density snapshots.
    Simulate,
    /// Measure distances to quasi-equilibrium and equilibrium along a run.
    Distances,
    /// Run the acceptance criteria and print a pass/fail table.
    Verify {
        /// Criterion tag (e.g. `metrics`) or number.
        #[arg(long)]
        filter: Option<String>,
    },
    /// Repeat `distances` over the values of one parameter.
    Sweep,
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(
        cli.config.as_deref(),
        &cli.sets,
        cli.tag.as_deref(),
        cli.outdir.as_deref(),
    )?;
    let written = match &cli.command {
        Command::Moments => commands::moments(&cfg)?,
        Command::Simulate => commands::simulate(&cfg)?,
        Command::Distances => commands::distances(&cfg)?,
        Command::Sweep => commands::sweep(&cfg)?,
        Command::Verify { filter } => {
            let outcomes = commands::verify(&cfg, filter.as_deref())?;
            for o in &outcomes {
                println!("{o}");
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
            if failed > 0 {
                return Err(AcceptanceFailed(failed).into());
            }
            Vec::new()
        }
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

/// 1 for configuration problems, 3 for failed criteria, 2 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 1;
        }
        if cause.downcast_ref::<AcceptanceFailed>().is_some() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Domain(_) | Error::Inadmissible(_) | Error::Unsupported(_) | Error::Closure { .. } => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<AcceptanceFailed>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
