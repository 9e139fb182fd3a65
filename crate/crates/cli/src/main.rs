//! wfpsim: run secondary Wi-Fi market scenarios and property checks.
//!
//! Exit codes: 0 success, 1 invalid config, 2 I/O failure, 3 property failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use wfp_market::check::{self, CheckConfig, Mutation};
use wfp_market::model::validate_scenario;
use wfp_market::report::{to_csv, to_svg};
use wfp_market::scenario::{crossover_index, presets, run, ScenarioConfig, TimeSeries};
use wfp_market::{Execution, MarketError};

#[derive(Parser)]
#[command(name = "wfpsim", version, about = "Secondary Wi-Fi bandwidth market simulator")]
struct Cli {
    /// Run everything on the calling thread
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Svg,
}

#[derive(clap::Args)]
struct Output {
    /// Output directory
    #[arg(long, env = "WFPSIM_OUT", default_value = "out")]
    out: PathBuf,

    /// Comma-separated output formats
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv")]
    formats: Vec<Format>,

    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config file
    Run {
        /// Path to the JSON scenario config
        #[arg(long)]
        config: PathBuf,

        #[command(flatten)]
        output: Output,
    },
    /// Run a bundled preset, or `all` of them
    Preset {
        /// Preset name or `all`
        name: String,

        #[command(flatten)]
        output: Output,
    },
    /// List bundled presets
    Presets,
    /// Run the randomized property suites
    Check {
        #[arg(long, default_value_t = CheckConfig::default().seed)]
        seed: u64,

        /// Cases per algebraic suite; heavy suites run a tenth of this
        #[arg(long, default_value_t = CheckConfig::default().cases)]
        cases: usize,

        /// Break the Shapley split on purpose to confirm the suites catch it
        #[arg(long, hide = true)]
        inject_mutation: bool,
    },
}

enum Failure {
    Invalid(String),
    Io(anyhow::Error),
    Property,
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result = match cli.command {
        Command::Run { config, output } => cmd_run(&config, &output, exec),
        Command::Preset { name, output } => cmd_preset(&name, &output, exec),
        Command::Presets => {
            for name in presets::names() {
                println!("{name}");
            }
            Ok(())
        }
        Command::Check {
            seed,
            cases,
            inject_mutation,
        } => {
            let mut cfg = CheckConfig::scaled(seed, cases);
            cfg.mutation = inject_mutation.then_some(Mutation::HalfToThird);
            cmd_check(&cfg, exec)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Property) => ExitCode::from(3),
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Io)?;
    ScenarioConfig::from_json(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn validated(cfg: ScenarioConfig, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let cfg = match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    let violations = validate_scenario(&cfg);
    if violations.is_empty() {
        return Ok(cfg);
    }
    let mut msg = format!("{}: {} violation(s)", cfg.name, violations.len());
    for v in &violations {
        msg.push_str(&format!("\n  {v}"));
    }
    Err(Failure::Invalid(msg))
}

fn execute(cfg: &ScenarioConfig, exec: Execution) -> Result<TimeSeries, Failure> {
    run(cfg, exec).map_err(|e| match e {
        MarketError::InvalidScenario(_) | MarketError::Parse(_) => Failure::Invalid(e.to_string()),
        other => Failure::Io(anyhow::Error::new(other).context(format!("running {}", cfg.name))),
    })
}

fn write_outputs(series: &TimeSeries, output: &Output) -> Result<Vec<PathBuf>, Failure> {
    fs::create_dir_all(&output.out)
        .with_context(|| format!("creating {}", output.out.display()))
        .map_err(Failure::Io)?;
    let mut written = Vec::new();
    let mut formats = output.formats.clone();
    formats.dedup();
    for format in formats {
        let (ext, body) = match format {
            Format::Csv => ("csv", to_csv(series)),
            Format::Svg => ("svg", to_svg(series)),
        };
        let path = output.out.join(format!("{}.{ext}", series.name));
        fs::write(&path, body)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Io)?;
        written.push(path);
    }
    Ok(written)
}

fn summarize(series: &TimeSeries, written: &[PathBuf]) {
    let files: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
    println!("{}: {} rows -> {}", series.name, series.len(), files.join(", "));
    for (name, rows) in series.by_series() {
        if let Some(k) = crossover_index(&rows) {
            println!("  {name}: shares cross at step {k}");
        }
        let unconverged = rows.iter().filter(|r| !r.converged).count();
        if unconverged > 0 {
            println!("  {name}: {unconverged} step(s) did not converge");
        }
    }
}

fn cmd_run(config: &Path, output: &Output, exec: Execution) -> Result<(), Failure> {
    let cfg = validated(load_config(config)?, output.seed)?;
    let series = execute(&cfg, exec)?;
    let written = write_outputs(&series, output)?;
    summarize(&series, &written);
    Ok(())
}

fn cmd_preset(name: &str, output: &Output, exec: Execution) -> Result<(), Failure> {
    let names: Vec<&str> = if name == "all" {
        presets::names().collect()
    } else if presets::source(name).is_some() {
        vec![name]
    } else {
        let known: Vec<&str> = presets::names().collect();
        return Err(Failure::Invalid(format!(
            "unknown preset `{name}`; expected one of: all, {}",
            known.join(", ")
        )));
    };
    let runs = exec.map(&names, |n| {
        let cfg = presets::load(n).map_err(|e| Failure::Invalid(e.to_string()))?;
        execute(&validated(cfg, output.seed)?, exec)
    });
    for series in runs {
        let series = series?;
        let written = write_outputs(&series, output)?;
        summarize(&series, &written);
    }
    Ok(())
}

fn cmd_check(cfg: &CheckConfig, exec: Execution) -> Result<(), Failure> {
    let outcomes = check::run_all(cfg, exec);
    let mut failed = 0;
    for o in &outcomes {
        if o.passed() {
            println!("pass {} ({} cases)", o.name, o.cases);
        } else {
            failed += 1;
            println!(
                "FAIL {} ({} of {} cases): {}",
                o.name,
                o.failures,
                o.cases,
                o.example.as_deref().unwrap_or("")
            );
        }
    }
    println!("seed {}: {} passed, {failed} failed", cfg.seed, outcomes.len() - failed);
    if failed > 0 {
        Err(Failure::Property)
    } else {
        Ok(())
    }
}
