use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use continua::oracle::enumerate_optimal_gain;
use continua::planning::{rvi_plan, RviConfig, TabularModel};
use continua::rng::SeedTree;
use continua::testbeds::{ContinuingEnv, EnvId, GOAL};
use continua_harness::config::ExperimentConfig;
use continua_harness::error::Result;
use continua_harness::{report, runner, suites};

/// Runs continua experiments and reports on them.
#[derive(Parser)]
#[command(name = "continua", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config; output goes to its output_dir or
    /// $CONTINUA_OUTPUT_ROOT/<config name>.
    Run {
        config: PathBuf,
        #[arg(long)]
        overwrite: bool,
        /// Worker threads (default: available cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Aggregate the runs in a result directory.
    Report {
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Kind::Line)]
        kind: Kind,
    },
    /// List experiments and their parameters.
    List,
    /// Print the exact optimal gain of a continuing environment.
    Oracle { name: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Line,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, overwrite, threads } => {
            let cfg = ExperimentConfig::parse(&std::fs::read_to_string(&config)?)?;
            let out = cfg.output_dir.clone().unwrap_or_else(|| {
                let root = std::env::var_os("CONTINUA_OUTPUT_ROOT").map_or_else(|| PathBuf::from("results"), PathBuf::from);
                root.join(config.file_stem().unwrap_or_default())
            });
            let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let runs = runner::run_experiment(&cfg, &out, overwrite, threads)?;
            println!("{} runs written to {}", runs.len(), out.display());
        }
        Command::Report { dir, kind: Kind::Line } => {
            let out = report::write_report(&dir)?;
            println!("report written to {}", out.display());
        }
        Command::List => {
            for s in suites::all() {
                println!("{}: {}", s.name, s.description);
                for p in &s.params {
                    println!("    {} = {}    # {}", p.key, p.default, p.help);
                }
            }
        }
        Command::Oracle { name } => {
            let id: EnvId = name.parse()?;
            let env = ContinuingEnv::new(id, &mut SeedTree::new(0).rng());
            let cfg = RviConfig {
                tol: 1e-12,
                reference: if id == EnvId::TwoRooms { GOAL } else { 0 },
                aperiodicity: 0.5,
                ..RviConfig::default()
            };
            let sol = rvi_plan(&TabularModel::from_dynamics(env.dynamics()), &cfg)?;
            println!("{name}: optimal gain {:.12} (relative value iteration)", sol.rho);
            if let Ok((g, policy)) = enumerate_optimal_gain(env.dynamics()) {
                println!("{name}: optimal gain {g:.12} (enumeration), policy {policy:?}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
