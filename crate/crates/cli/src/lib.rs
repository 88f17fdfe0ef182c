//! Command-line driver: configuration, scenario selection, execution and
//! output files.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hidden_action_core::benchmark::BenchmarkFixture;
use hidden_action_core::engine::{run_scenario, GridFilter, ResolvedScenario};

use crate::config::{ConfigError, Experiment};
use crate::output::{EmitFlags, Emitter, FailedScenario, RunManifest, FIXTURE_FILE, MANIFEST_FILE};

/// Drift beyond which a regenerated fixture is refused.
pub const FIXTURE_DRIFT_TOL: f64 = 1e-6;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<output::OutputError> for CliError {
    fn from(e: output::OutputError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "hidden-action", version, about = "Principal-agent hidden-action simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the scenario grid and write panel, summary and distance files.
    Run(RunArgs),
    /// Regenerate or check the frozen benchmark values.
    Fixtures(FixtureArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML configuration; defaults reproduce the full experiment grid.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Restrict one axis, e.g. `delta=0.5` or `lambda_frac=1/5`. Repeatable.
    #[arg(long = "filter", value_name = "KEY=VALUE")]
    pub filters: Vec<String>,
    /// Runs per scenario (R).
    #[arg(long)]
    pub runs: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Comma-separated: panel, summary, series, fixtures, all.
    #[arg(long, default_value = "panel,summary,series")]
    pub emit: String,
    /// Write results for the scenarios that could be run even if others failed.
    #[arg(long)]
    pub partial: bool,
    /// Worker threads; does not change the output.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FixtureArgs {
    /// TOML configuration supplying rho, eta, reservation_utility, mu and premium_step.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "crates/core/fixtures/benchmark.json")]
    pub path: PathBuf,
    /// Compare only; never write.
    #[arg(long)]
    pub check: bool,
}

fn load_experiment(path: Option<&Path>) -> Result<Experiment, CliError> {
    Ok(match path {
        Some(p) => config::load(p)?,
        None => Experiment::default(),
    })
}

fn parse_filters(filters: &[String]) -> Result<GridFilter, CliError> {
    let mut filter = GridFilter::default();
    for f in filters {
        let (k, v) = f
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--filter {f}: expected KEY=VALUE")))?;
        filter
            .restrict(k, v)
            .map_err(|e| CliError::Config(format!("--filter {f}: {e}")))?;
    }
    Ok(filter)
}

/// Outcome of a `run` command.
#[derive(Debug)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub summaries: Vec<hidden_action_core::metrics::ScenarioSummary>,
}

pub fn run(args: &RunArgs) -> Result<RunReport, CliError> {
    let mut exp = load_experiment(args.config.as_deref())?;
    if let Some(r) = args.runs {
        if r == 0 {
            return Err(CliError::Config("--runs must be at least 1".into()));
        }
        exp.base.runs = r;
    }
    if let Some(s) = args.seed {
        exp.base.master_seed = s;
    }
    let flags = EmitFlags::parse(&args.emit).map_err(|e| CliError::Config(format!("--emit: {e}")))?;
    let filter = parse_filters(&args.filters)?;
    let configs = exp.scenarios(&filter)?;
    if configs.is_empty() {
        return Err(CliError::Config("no scenarios selected".into()));
    }

    let mut runnable = Vec::new();
    let mut failed = Vec::new();
    for cfg in configs {
        let id = cfg.id().to_string();
        match ResolvedScenario::new(cfg.clone()) {
            Ok(_) => runnable.push(cfg),
            Err(e) => failed.push(FailedScenario {
                scenario_id: id,
                error: e.to_string(),
            }),
        }
    }
    if !failed.is_empty() && !args.partial {
        let list: Vec<String> = failed
            .iter()
            .map(|f| format!("{}: {}", f.scenario_id, f.error))
            .collect();
        return Err(CliError::Runtime(format!(
            "{} scenario(s) cannot run; nothing written (use --partial to keep the rest):\n  {}",
            failed.len(),
            list.join("\n  ")
        )));
    }

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = args.jobs {
            if j == 0 {
                return Err(CliError::Config("--jobs must be at least 1".into()));
            }
            b = b.num_threads(j);
        }
        b.build().map_err(|e| CliError::Runtime(e.to_string()))?
    };

    let mut emitter = Emitter::create(&args.out, &flags)?;
    let scenarios: Vec<String> = runnable.iter().map(|c| c.id().to_string()).collect();
    for cfg in runnable {
        let written = pool
            .install(|| run_scenario(cfg))
            .map_err(|e| CliError::Runtime(e.to_string()))
            .and_then(|result| Ok(emitter.write(&result).map(|_| ())?));
        if let Err(e) = written {
            emitter.abort();
            return Err(e);
        }
    }
    let summaries = emitter.finish()?;

    if flags.fixtures {
        let fixture = BenchmarkFixture::compute(&exp.base.actor, exp.base.mu, &exp.base.options.space_grid)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        output::write_json(&args.out.join(FIXTURE_FILE), &fixture)?;
    }

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_path: args.config.as_ref().map(|p| p.display().to_string()),
        output_dir: args.out.display().to_string(),
        master_seed: exp.base.master_seed,
        runs: exp.base.runs,
        periods: exp.base.periods,
        emit: flags.names(),
        filters: args.filters.clone(),
        partial: !failed.is_empty(),
        scenarios,
        failed,
        base: exp.base.clone(),
    };
    output::write_json(&args.out.join(MANIFEST_FILE), &manifest)?;
    Ok(RunReport { manifest, summaries })
}

/// Recomputes the benchmark and compares it with the fixture at `args.path`.
/// Returns the computed values and the drift from the previous file, if any.
pub fn fixtures(args: &FixtureArgs) -> Result<(BenchmarkFixture, Option<f64>), CliError> {
    let exp = load_experiment(args.config.as_deref())?;
    let fresh = BenchmarkFixture::compute(&exp.base.actor, exp.base.mu, &exp.base.options.space_grid)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let previous = match std::fs::read_to_string(&args.path) {
        Ok(text) => Some(
            serde_json::from_str::<BenchmarkFixture>(&text)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", args.path.display())))?,
        ),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound && !args.check => None,
        Err(e) => return Err(CliError::Runtime(format!("{}: {e}", args.path.display()))),
    };
    let drift = previous.as_ref().map(|p| p.max_drift(&fresh));
    if let Some(d) = drift {
        if d > FIXTURE_DRIFT_TOL {
            return Err(CliError::Runtime(format!(
                "{}: benchmark drifted by {d:e} (> {FIXTURE_DRIFT_TOL:e}); file left unchanged",
                args.path.display()
            )));
        }
    }
    if !args.check {
        output::write_json(&args.path, &fresh)?;
    }
    Ok((fresh, drift))
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Run(args) => run(args).map(|report| {
            eprintln!(
                "{} scenario(s) written to {}",
                report.summaries.len(),
                args.out.display()
            );
        }),
        Command::Fixtures(args) => fixtures(args).map(|(fx, drift)| {
            let verb = if args.check { "checked" } else { "wrote" };
            match drift {
                Some(d) => eprintln!("{verb} {} (drift {d:e})", args.path.display()),
                None => eprintln!("{verb} {}", args.path.display()),
            }
            println!("a* = {}  phi* = {}  x* = {}", fx.a_star, fx.phi_star, fx.x_star);
        }),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
