use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use palc_cli::{cmd_run, cmd_suggest, cmd_validate, CliError, RunOverrides};

#[derive(Parser)]
#[command(name = "palc", version, about = "Partitioned active learning for GP surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write curves and reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `experiment.output`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long = "seed-override")]
        seed_override: Option<u64>,
        #[arg(long = "strategy-override")]
        strategy_override: Option<String>,
    },
    /// Print the next design point for the state in DIR (config.toml + data.csv).
    Suggest {
        #[arg(value_name = "DIR")]
        state: PathBuf,
    },
    /// Check a config and print it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            seed_override,
            strategy_override,
        } => {
            let overrides = RunOverrides {
                out,
                jobs,
                seed: seed_override,
                strategy: strategy_override,
            };
            let report = cmd_run(&config, &overrides)?;
            println!(
                "{} {}: mean {:.6} sd {:.6} over {} replications ({} failed), mean criterion time {:.4}s",
                report.strategy,
                report.metric,
                report.mean,
                report.sd,
                report.replications.len(),
                report.failures.len(),
                report.mean_time
            );
        }
        Command::Suggest { state } => {
            let s = cmd_suggest(&state)?;
            println!("{}", s.csv_row());
        }
        Command::Validate { config } => {
            print!("{}", cmd_validate(&config)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            eprintln!("{}", CliError::Config(format!("arguments: {msg}")).diagnostic());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
