use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use epsync::experiments::{bundled, run, RunManifest, RunReport, Status};

const EXIT_SCENARIO_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

/// Gain-loss optomechanical oscillator simulations.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Worker thread cap for scenario and sweep-point parallelism.
    #[arg(long, env = "EPSYNC_WORKERS", global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every scenario of a TOML manifest.
    Run {
        manifest: PathBuf,
        /// Output directory, overriding the manifest's.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parameter override `key=value`, applied to every scenario.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
    /// Print the bundled figure scenarios.
    ListScenarios,
    /// Parse a manifest and report parameter problems without running it.
    Validate { manifest: PathBuf },
    /// Run one bundled figure scenario.
    Fig {
        name: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn execute(manifest: &RunManifest) -> ExitCode {
    let report: RunReport = match run(manifest) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_SCENARIO_FAILURE);
        }
    };
    for s in &report.scenarios {
        match s.status {
            Status::Ok => println!("ok      {} ({:.1} s)", s.name, s.wall_time_s),
            Status::Failed => {
                println!("FAILED  {}", s.name);
                for e in &s.errors {
                    println!("        {e}");
                }
            }
        }
    }
    println!("report: {}", report.output_dir.join("report.json").display());
    if report.failed() {
        ExitCode::from(EXIT_SCENARIO_FAILURE)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            return usage("worker cap must be at least 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return usage(e);
        }
    }
    match cli.command {
        Command::Run { manifest, out, params } => {
            let mut m = match RunManifest::load(&manifest) {
                Ok(m) => m,
                Err(e) => return usage(format!("{}: {e}", manifest.display())),
            };
            if let Err(e) = m.apply_overrides(&params) {
                return usage(e);
            }
            if let Some(out) = out {
                m.output_dir = out;
            }
            execute(&m)
        }
        Command::ListScenarios => {
            for (name, description) in bundled::list() {
                println!("{name}\t{description}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { manifest } => {
            let m = match RunManifest::load(&manifest) {
                Ok(m) => m,
                Err(e) => return usage(format!("{}: {e}", manifest.display())),
            };
            let problems = m.problems();
            if problems.is_empty() {
                println!("{}: {} scenario(s), valid", manifest.display(), m.scenarios.len());
                return ExitCode::SUCCESS;
            }
            for (scenario, findings) in problems {
                for f in findings {
                    println!("{scenario}: {}: {}", f.field, f.message);
                }
            }
            ExitCode::from(EXIT_SCENARIO_FAILURE)
        }
        Command::Fig { name, out, params } => {
            let Some(mut m) = bundled::manifest(&name, out, None) else {
                return usage(format!("unknown scenario `{name}` (see list-scenarios)"));
            };
            if let Err(e) = m.apply_overrides(&params) {
                return usage(e);
            }
            execute(&m)
        }
    }
}
