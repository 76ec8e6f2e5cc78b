//! `uvm`: runs the pricing solvers and accuracy experiments from a config
//! file and writes plot-ready CSVs plus a run manifest.

mod commands;
mod config;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use uvm::OptimizerMode;

use crate::commands::Outcome;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "uvm", version, about = "Worst-case option pricing under uncertain volatility with slow CIR bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config file; the bundled paper preset when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,

    /// Seed for the Monte Carlo subcommands (overrides mc.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Config override `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Use the unguarded three-candidate optimizer in the 2D solver.
    #[arg(long, global = true)]
    paper_exact: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Leading-order price P0 surface.
    SolveP0,
    /// P0, the correction P1 and P0 + sqrt(delta) P1.
    SolveP1,
    /// Full two-dimensional worst-case price and its control field.
    SolvePdelta,
    /// Expansion error over the configured delta list with the slope fit.
    SweepError,
    /// CIR paths and the volatility band [d sqrt(Z), u sqrt(Z)].
    SimulateBounds,
    /// Monte Carlo coupling rate E[(X^delta_T - X^0_T)^2] against delta.
    CouplingRate,
    /// P0 against Black-Scholes at the two volatility bounds.
    CompareBs,
    /// Gamma sign structure of P0 and P^delta.
    GammaDiag,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::SolveP0 => "solve-p0",
            Command::SolveP1 => "solve-p1",
            Command::SolvePdelta => "solve-pdelta",
            Command::SweepError => "sweep-error",
            Command::SimulateBounds => "simulate-bounds",
            Command::CouplingRate => "coupling-rate",
            Command::CompareBs => "compare-bs",
            Command::GammaDiag => "gamma-diag",
        }
    }

    fn uses_seed(self) -> bool {
        matches!(self, Command::SimulateBounds | Command::CouplingRate)
    }

    fn run(self, c: &RunConfig) -> Result<Outcome, CliError> {
        match self {
            Command::SolveP0 => commands::solve_p0(c),
            Command::SolveP1 => commands::solve_p1(c),
            Command::SolvePdelta => commands::solve_pdelta_cmd(c),
            Command::SweepError => commands::sweep_error(c),
            Command::SimulateBounds => commands::simulate_bounds(c),
            Command::CouplingRate => commands::coupling_rate(c),
            Command::CompareBs => commands::compare_bs_cmd(c),
            Command::GammaDiag => commands::gamma_diag(c),
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let base = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::paper(),
    };
    let mut c = base.with_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        c.mc.seed = seed;
    }
    if cli.paper_exact {
        c.solver.optimizer = OptimizerMode::PaperExact;
    }
    Ok(c)
}

fn write_outputs(
    out: &Path,
    cli: &Cli,
    c: &RunConfig,
    outcome: &Outcome,
    elapsed_s: f64,
) -> Result<(), CliError> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;
    for (name, table) in &outcome.tables {
        table.write_file(out.join(name))?;
    }
    let config_toml = c.to_toml();
    fs::write(out.join("resolved.toml"), &config_toml)?;
    let manifest = json!({
        "tool": "uvm",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cli.command.name(),
        "seed": cli.command.uses_seed().then_some(c.mc.seed),
        "threads": cli.threads,
        "config": c,
        "config_toml": config_toml,
        "outputs": outcome.tables.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
        "timings_s": { "total": elapsed_s },
        "summary": outcome.summary,
    });
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Io(format!("cannot serialize manifest: {e}")))?;
    fs::write(out.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn run(cli: &Cli) -> Result<Value, CliError> {
    let c = resolve_config(cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))?;
    }
    let started = Instant::now();
    let outcome = cli.command.run(&c)?;
    let elapsed_s = started.elapsed().as_secs_f64();
    write_outputs(&cli.out, cli, &c, &outcome, elapsed_s)?;
    Ok(outcome.summary)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{}", json!({ "subcommand": cli.command.name(), "summary": summary }));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
