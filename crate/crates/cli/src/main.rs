//! `rtpmcmc`: simulate epidemics and genealogies, run the particle filter,
//! tune the particle count, sample R_t by PMMH and summarize the chains.

mod cmd;
mod config;
mod data;
mod error;
mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use serde_json::{json, Value};

use error::{CliError, Kind};

/// Output directory when neither `--out` nor the environment names one.
const DEFAULT_OUT: &str = "rtpmcmc-out";

#[derive(Debug, Parser)]
#[command(name = "rtpmcmc", version, about = "Particle MCMC inference of the time-varying reproduction number")]
struct Cli {
    /// Output directory.
    #[arg(long, short = 'o', global = true, env = "RTPMCMC_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads for the particle filter (results do not depend on it).
    #[arg(long, global = true, env = "RTPMCMC_THREADS")]
    threads: Option<usize>,
    /// Print the full command-line interface as JSON and exit.
    #[arg(long)]
    help_json: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an epidemic, noisy prevalence reports and a sampled genealogy.
    Simulate(cmd::simulate::SimulateArgs),
    /// Slice a dated tree into per-day lineage and coalescence counts.
    Discretize(cmd::discretize::DiscretizeArgs),
    /// Run the particle filter once at fixed parameters.
    Smc(cmd::smc::SmcArgs),
    /// Choose the particle count from the variance of the log-likelihood.
    Tune(cmd::tune::TuneArgs),
    /// Sample (σ, ρ, X₀) and the latent trajectories by particle marginal Metropolis–Hastings.
    Pmmh(cmd::pmmh::PmmhArgs),
    /// Pool chains after burn-in and report posterior means and 95% intervals.
    Summarize(cmd::summarize::SummarizeArgs),
}

fn arg_json(arg: &clap::Arg) -> Value {
    json!({
        "id": arg.get_id().as_str(),
        "long": arg.get_long(),
        "short": arg.get_short().map(String::from),
        "help": arg.get_help().map(ToString::to_string),
        "required": arg.is_required_set(),
        "positional": arg.is_positional(),
        "takes_value": arg.get_action().takes_values(),
        "multiple": matches!(arg.get_action(), clap::ArgAction::Append),
        "default": arg.get_default_values().iter().map(|v| v.to_string_lossy().into_owned()).collect::<Vec<_>>(),
        "possible_values": arg.get_possible_values().iter().map(|v| v.get_name().to_string()).collect::<Vec<_>>(),
        "env": arg.get_env().map(|e| e.to_string_lossy().into_owned()),
    })
}

fn command_json(cmd: &clap::Command) -> Value {
    json!({
        "name": cmd.get_name(),
        "about": cmd.get_about().map(ToString::to_string),
        "version": cmd.get_version(),
        "args": cmd.get_arguments().filter(|a| !matches!(a.get_id().as_str(), "help" | "version")).map(arg_json).collect::<Vec<_>>(),
        "subcommands": cmd.get_subcommands().map(command_json).collect::<Vec<_>>(),
        "exit_codes": {
            "0": "success",
            "1": "I/O failure",
            "2": "usage or configuration error",
            "3": "input file could not be parsed",
            "4": "infeasible simulation scenario",
            "5": "no finite likelihood at the initial parameters",
            "6": "particle tuning failed",
        },
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new(Kind::Usage, e))?;
    }
    let out = cli.out.clone();
    let out_or_default = || out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    match cli.command {
        None => Err(CliError::usage("no subcommand given; see --help")),
        Some(Command::Simulate(a)) => cmd::simulate::run(&a, &out_or_default()),
        Some(Command::Discretize(a)) => cmd::discretize::run(&a, &out_or_default()),
        Some(Command::Smc(a)) => cmd::smc::run(&a, &out_or_default()),
        Some(Command::Tune(a)) => cmd::tune::run(&a, &out_or_default()),
        Some(Command::Pmmh(a)) => cmd::pmmh::run(&a, &out_or_default()),
        Some(Command::Summarize(a)) => {
            // Next to the (first) run rather than over its manifest.
            let dir = out.unwrap_or_else(|| Path::new(&a.runs[0]).join("summary"));
            cmd::summarize::run(&a, &dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { Kind::Usage.exit_code() } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if cli.help_json {
        let doc = command_json(&Cli::command());
        // A closed pipe (e.g. `| head`) is not an error worth reporting.
        let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&doc).expect("help serializes"));
        return ExitCode::SUCCESS;
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
