use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use leray_cli::{commands, parse_config, CliError, Observable, Outcome, SimConfig};

#[derive(Parser)]
#[command(name = "leray", version, about = "Leray-alpha spectral simulator with transport noise")]
struct Cli {
    /// Worker threads for ensemble runs (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output` from the config file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate an ensemble and write run.ndjson.
    Simulate(RunArgs),
    /// Covariance ODE vs Monte-Carlo; writes cov.csv and cov_report.ndjson.
    Covariance(RunArgs),
    /// Reweighted linear vs direct nonlinear ensemble; writes girsanov.csv.
    GirsanovCompare {
        #[command(flatten)]
        run: RunArgs,
        /// re:k1,k2,k3:j | im:k1,k2,k3:j | energy | one
        #[arg(long)]
        observable: Option<Observable>,
    },
    /// Check an NDJSON snapshot against a shell.
    ValidateField {
        #[arg(long)]
        field: PathBuf,
        /// Cutoff N; taken from --config when omitted.
        #[arg(long)]
        cutoff: Option<u32>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(args: &RunArgs) -> Result<(SimConfig, PathBuf), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", args.config.display())))?;
    let parsed = parse_config(&text)?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let mut config = parsed.config;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let out = args.out.clone().unwrap_or_else(|| config.output.clone());
    Ok((config, out))
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => {
            let (c, out) = load(&a)?;
            commands::simulate(&c, &out)
        }
        Command::Covariance(a) => {
            let (c, out) = load(&a)?;
            commands::covariance(&c, &out)
        }
        Command::GirsanovCompare { run, observable } => {
            let (c, out) = load(&run)?;
            let obs = observable.unwrap_or(c.observable);
            commands::girsanov_compare(&c, obs, &out)
        }
        Command::ValidateField { field, cutoff, config } => {
            let n = match (cutoff, config) {
                (Some(n), _) => n,
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                    parse_config(&text)?.config.cutoff
                }
                (None, None) => return Err(CliError::Usage("validate-field needs --cutoff or --config".into())),
            };
            commands::validate_field(&field, n)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(&e)
        }
    }
}
