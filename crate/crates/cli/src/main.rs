use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

use commands::{ConfigError, RunContext};
use config::ExperimentConfig;
use output::{Outcome, ReportRecord};

#[derive(Parser)]
#[command(name = "linsketch", version, about = "Protocol-to-sketch reductions and sketch experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (.toml or .json).
    #[arg(long)]
    config: PathBuf,
    /// Seed as hex; overrides the config.
    #[arg(long)]
    seed: Option<String>,
    /// Directory for report.json and per-x tables.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Acceptance tolerance for the exit status.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a protocol to a sketch and verify the result.
    Reduce(Common),
    /// Evaluate a stored sketch against a function.
    SketchEval(Common),
    /// Run a sketch or protocol on a stream file.
    Simulate(Common),
    /// Measure the generator against a small automaton and check derandomized sketching.
    PrgCheck(Common),
    /// List functions, machines and protocols in the zoo.
    ZooList,
}

type Runner = fn(&RunContext, &std::path::Path) -> Result<Outcome>;

fn run(name: &str, common: &Common, runner: Runner) -> Result<bool> {
    let start = Instant::now();
    let as_config = |e: anyhow::Error| ConfigError(format!("{e:#}"));
    let cfg = ExperimentConfig::load(&common.config).map_err(as_config)?;
    cfg.check_kind(name).map_err(as_config)?;
    let seed_text = common.seed.clone().or_else(|| cfg.seed.clone()).unwrap_or_else(|| "0".into());
    let seed = config::parse_seed(&seed_text).map_err(as_config)?;
    if let Some(t) = common.tolerance {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(ConfigError(format!("tolerance must be a finite non-negative number, got {t}")).into());
        }
    }
    commands::prepare_out_dir(&common.out)?;
    let ctx = RunContext {
        cfg: &cfg,
        seed,
        tolerance: common.tolerance,
    };
    let outcome = runner(&ctx, &common.out)?;
    let record = ReportRecord {
        tool: "linsketch".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: name.into(),
        seed: format!("{seed:x}"),
        config: cfg.clone(),
        passed: outcome.passed,
        reason: outcome.reason.clone(),
        result: outcome.result,
        elapsed_ms: start.elapsed().as_millis(),
    };
    output::write_report(&common.out.join("report.json"), &record)?;
    match &outcome.reason {
        None => println!("{name}: passed ({} ms), report in {}", record.elapsed_ms, common.out.display()),
        Some(r) => println!("{name}: FAILED: {r}; report in {}", common.out.display()),
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Reduce(c) => run("reduce", c, commands::reduce_cmd),
        Command::SketchEval(c) => run("sketch-eval", c, commands::sketch_eval_cmd),
        Command::Simulate(c) => run("simulate", c, commands::simulate_cmd),
        Command::PrgCheck(c) => run("prg-check", c, commands::prg_check_cmd),
        Command::ZooList => commands::zoo_list().map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            // exit status 2: bad config or parameters; 3: failure while running
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
