use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stategeom::config::Experiment;
use stategeom::manifest::verify;
use stategeom::validate::{has_errors, validate};
use stategeom::{default_out_dir, execute, load_config, Exit, RunError, OUT_ENV};

#[derive(Parser)]
#[command(name = "stategeom", version, about = "Seeded experiments on the geometry of packet states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, or `all` for the whole acceptance suite.
    Run {
        /// verify-metric, decompose, ehrenfest, classical-compare,
        /// constrained-walk, gue-walk, born-check, macro-estimate or all
        experiment: Experiment,
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Overrides the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; must be empty or absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Shipped configuration: default, paper-1mm or quick.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Check a configuration without running it.
    Validate {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Experiment whose parameters are checked.
        #[arg(long, default_value = "all")]
        experiment: Experiment,
    },
    /// Re-check the checksums of a run directory against its manifest.
    VerifyManifest { dir: PathBuf },
}

fn code(e: Exit) -> ExitCode {
    ExitCode::from(e as u8)
}

fn fail(err: RunError) -> ExitCode {
    eprintln!("{err}");
    code(err.exit())
}

fn run(
    experiment: Experiment,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    preset: Option<String>,
) -> ExitCode {
    let mut loaded = match load_config(config.as_deref(), preset.as_deref()) {
        Ok(l) => l,
        Err(e) => return fail(e),
    };
    if seed.is_some() {
        loaded.config.seed = seed;
    }
    let out = out.unwrap_or_else(|| {
        let env_root = std::env::var_os(OUT_ENV).map(PathBuf::from);
        default_out_dir(&loaded.config, experiment, loaded.config.seed.unwrap_or(0), env_root)
    });
    let outcome = match execute(experiment, &loaded, &out) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    for w in &outcome.warnings {
        eprintln!("{w}");
    }
    for c in &outcome.criteria {
        println!("{}", c.summary());
    }
    println!("artifacts: {}", outcome.out.display());
    let failed = outcome.failed();
    if failed.is_empty() {
        code(Exit::Success)
    } else {
        for c in &failed {
            eprintln!("criterion {} failed: {}", c.id, c.title);
        }
        code(Exit::Criterion)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { experiment, config, seed, out, preset } => run(experiment, config, seed, out, preset),
        Command::Validate { config, preset, experiment } => {
            let loaded = match load_config(config.as_deref(), preset.as_deref()) {
                Ok(l) => l,
                Err(e) => return fail(e),
            };
            let diags = validate(&loaded.config, Some(&loaded.text), experiment);
            for d in &diags {
                println!("{d}");
            }
            if has_errors(&diags) {
                code(Exit::Config)
            } else {
                if diags.is_empty() {
                    println!("{}: ok", loaded.source);
                }
                code(Exit::Success)
            }
        }
        Command::VerifyManifest { dir } => match verify(&dir) {
            Ok((manifest, problems)) => {
                for p in &problems {
                    println!("{p}");
                }
                if problems.is_empty() {
                    println!("{} files verified", manifest.files.len());
                    code(Exit::Success)
                } else {
                    code(Exit::Criterion)
                }
            }
            Err(e) => fail(RunError::Io(e)),
        },
    }
}
