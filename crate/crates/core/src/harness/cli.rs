//! Command line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::check::run_checks;
use super::config::{parse_config, preset, RunConfig};
use super::run::{execute, execute_sweep, RunSummary};
use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tissue-flow", version, about = "Two viscous tissues in contact: simulations and certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for the randomized invariants of `check`.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Grid resolution as NXxNY, overriding the configuration.
    #[arg(long, global = true, value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    /// Concurrent runs in `sweep`.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configuration file or preset name.
    Run { config: String },
    /// Run every point of the `[sweep]` section.
    Sweep { config: String },
    /// Solve a stationary configuration and write jump tables.
    Stationary { config: String },
    /// Run the invariant battery.
    Check,
}

/// Parses `NXxNY`.
pub fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected NXxNY, got `{s}`"))?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad grid size `{t}` in `{s}`"));
    Ok((n(a)?, n(b)?))
}

/// Exit code for an error: 1 for bad input, 2 for failures while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::Params(_) | Error::Grid(_) | Error::InitialData { .. } | Error::Partition(_) | Error::Shape(_) => {
            EXIT_CONFIG
        }
        Error::SolverFailure { .. } | Error::StepControl(_) | Error::VanishingDomain { .. } | Error::Io(_) => EXIT_SOLVER,
    }
}

/// Reads `arg` as a file when it exists, otherwise as a preset name.
pub fn load_config(arg: &str) -> Result<RunConfig, Error> {
    let path = Path::new(arg);
    if path.is_file() {
        return parse_config(&std::fs::read_to_string(path)?);
    }
    preset(arg).ok_or_else(|| Error::Config(vec![format!("`{arg}` is neither a readable file nor a preset name")]))
}

fn prepare(arg: &str, common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = load_config(arg)?;
    if let Some((nx, ny)) = common.grid {
        cfg = cfg.with_grid(nx, ny)?;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn report(summary: &RunSummary, out: &Path) {
    for w in &summary.warnings {
        eprintln!("{w}");
    }
    for (k, v) in &summary.entries {
        println!("{k} = {v:.6e}");
    }
    println!("wall_time_s = {:.3}", summary.wall_time);
    println!("output: {}", out.display());
}

fn fail(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(e)
}

/// Runs the parsed command and returns the process exit code.
pub fn dispatch(cli: &Cli) -> i32 {
    match &cli.command {
        Command::Run { config } | Command::Stationary { config } => {
            let cfg = match prepare(config, &cli.common) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            if matches!(cli.command, Command::Stationary { .. }) && !cfg.model.is_stationary() {
                return fail(&Error::Config(vec![format!("`stationary` needs a stationary model, got {}", cfg.model.name())]));
            }
            match execute(&cfg, &cfg.out_dir) {
                Ok(s) => {
                    report(&s, &cfg.out_dir);
                    EXIT_OK
                }
                Err(e) => fail(&e),
            }
        }
        Command::Sweep { config } => {
            let cfg = match prepare(config, &cli.common) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match execute_sweep(&cfg, &cfg.out_dir, cli.common.jobs) {
                Ok(outcomes) => {
                    let mut code = EXIT_OK;
                    for o in &outcomes {
                        let point: Vec<String> = o.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
                        match &o.result {
                            Ok(s) => println!("{} ok ({:.2}s) {}", point.join(" "), s.wall_time, o.dir.display()),
                            Err(e) => {
                                println!("{} FAILED: {e}", point.join(" "));
                                code = EXIT_SOLVER;
                            }
                        }
                    }
                    println!("table: {}", cfg.out_dir.join("sweep.csv").display());
                    code
                }
                Err(e) => fail(&e),
            }
        }
        Command::Check => {
            let (nx, ny) = cli.common.grid.unwrap_or((16, 16));
            match run_checks(cli.common.seed, nx, ny) {
                Ok(outcomes) => {
                    let passed = outcomes.iter().filter(|c| c.passed).count();
                    for c in &outcomes {
                        println!("{} {} ({})", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
                    }
                    println!("{passed}/{} invariants hold (seed {}, grid {nx}x{ny})", outcomes.len(), cli.common.seed);
                    if passed == outcomes.len() {
                        EXIT_OK
                    } else {
                        EXIT_INVARIANT
                    }
                }
                Err(e) => fail(&e),
            }
        }
    }
}

/// Parses the process arguments and runs. Argument errors exit with 1.
pub fn run_cli() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => dispatch(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}
