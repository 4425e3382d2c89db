use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sdarb_cli::error::{CliError, EXIT_OK, EXIT_VALIDATION};
use sdarb_cli::{backtest, build, diagnose, mps_solve, solve, verify, RunConfig};

#[derive(Parser)]
#[command(
    name = "sdarb",
    version,
    about = "Stochastic-arbitrage layover portfolios from option quotes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export one MPS file and metadata JSON per month and depth scale.
    Build(Common),
    /// Solve every month and depth scale and summarize per scale.
    Solve(Common),
    /// Evaluate solved portfolios against realized index levels.
    Backtest(Common),
    /// PIT calibration and bootstrap dominance tests.
    Diagnose(Common),
    /// Check the solver against the exact dominance oracle on synthetic instances.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Negate one option's payoff inside the programs.
        #[arg(long)]
        inject_fault: bool,
        /// Re-run the case stored in a failure dump.
        #[arg(long, value_name = "FILE")]
        replay: Option<PathBuf>,
    },
    /// Solve an MPS file and write a `name value` solution file.
    MpsSolve { model: PathBuf, solution: PathBuf },
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct Common {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Any setting as KEY=VALUE (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    settings: Vec<String>,
    #[arg(long)]
    quotes: Option<String>,
    #[arg(long)]
    observables: Option<String>,
    #[arg(long)]
    exclusions: Option<String>,
    #[arg(long)]
    realized: Option<String>,
    /// Solve output read by `backtest`.
    #[arg(long)]
    solutions: Option<String>,
    #[arg(long, short = 'o')]
    output: Option<String>,
    /// symmetric or skewed
    #[arg(long)]
    spec: Option<String>,
    /// Annual market risk premium.
    #[arg(long)]
    mrp: Option<String>,
    /// Annual volatility risk premium.
    #[arg(long)]
    vrp: Option<String>,
    /// Depth scales, comma separated.
    #[arg(long)]
    scale: Option<String>,
    /// lp, lp_star, lp_combined or milp
    #[arg(long)]
    formulation: Option<String>,
    /// Seconds per problem.
    #[arg(long)]
    time_limit: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Premium materiality as a fraction of the market investment.
    #[arg(long)]
    threshold: Option<String>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut overrides = Vec::new();
        for s in &self.settings {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            overrides.push((k.to_string(), v.to_string()));
        }
        let flags = [
            ("quotes", &self.quotes),
            ("observables", &self.observables),
            ("exclusions", &self.exclusions),
            ("realized", &self.realized),
            ("solutions", &self.solutions),
            ("output", &self.output),
            ("spec", &self.spec),
            ("mrp", &self.mrp),
            ("vrp", &self.vrp),
            ("scale", &self.scale),
            ("formulation", &self.formulation),
            ("time_limit", &self.time_limit),
            ("seed", &self.seed),
            ("threshold", &self.threshold),
            ("jobs", &self.jobs),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                overrides.push((k.to_string(), v.clone()));
            }
        }
        RunConfig::resolve(self.config.as_deref(), &overrides)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Build(c) => build::run(&c.resolve()?).map(drop),
        Command::Solve(c) => solve::run(&c.resolve()?).map(drop),
        Command::Backtest(c) => backtest::run(&c.resolve()?).map(drop),
        Command::Diagnose(c) => diagnose::run(&c.resolve()?).map(drop),
        Command::Verify {
            common,
            inject_fault,
            replay,
        } => {
            let cfg = common.resolve()?;
            match replay {
                Some(path) => verify::replay(&path, &cfg).map(drop),
                None => verify::run(&cfg, inject_fault).map(drop),
            }
        }
        Command::MpsSolve { model, solution } => mps_solve::run(&model, &solution).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage errors are validation failures; help and version succeed
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
