use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use ccpo_bench::bounds::{bounds_table, write_bounds_csv};
use ccpo_bench::checks::{run_suite, Suite};
use ccpo_bench::config::ExperimentConfig;
use ccpo_bench::run::{cmd_oracle_compare, cmd_run};
use ccpo_bench::CliError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ccpo",
    version,
    about = "Conditioned constrained policy optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run a single seed instead of `run.seeds`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overrides `run.output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every configured seed.
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// Worker threads for independent seeds.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Run a verification suite and print one JSON line per check.
    Verify {
        /// estep, dual, bounds, coverage, elbo, safety or all.
        suite: String,
    },
    /// Print leverage maxima and fitted envelopes as CSV.
    Bounds {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        degrees: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        n_max: usize,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a trained policy with the LP frontier on a tabular task.
    OracleCompare {
        #[command(flatten)]
        args: RunArgs,
    },
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("reading {}: {e}", args.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = args.seed {
        cfg.set_seeds(vec![seed]);
    }
    if let Some(out) = &args.out {
        cfg.set_output(out.clone());
    }
    Ok(cfg)
}

fn verify(name: &str) -> Result<bool, CliError> {
    let suites: Vec<Suite> = if name == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::parse(name).ok_or_else(|| {
            CliError::Config(format!("unknown suite `{name}`; expected estep, dual, bounds, coverage, elbo, safety or all"))
        })?]
    };
    let mut ok = true;
    let stdout = io::stdout();
    for suite in suites {
        for check in run_suite(suite)? {
            ok &= check.pass;
            writeln!(stdout.lock(), "{}", check.to_json())
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    Ok(ok)
}

fn dispatch(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run { args, parallel } => {
            let cfg = load(&args)?;
            let out = cmd_run(&cfg, parallel)?;
            println!("{}", out.metrics.display());
            println!("{}", out.summary.display());
            Ok(true)
        }
        Command::Verify { suite } => verify(&suite),
        Command::Bounds {
            degrees,
            n_max,
            out,
        } => {
            let rows = bounds_table(&degrees, n_max)?;
            let res = match out {
                Some(path) => {
                    let f = fs::File::create(&path).map_err(|e| {
                        CliError::Runtime(format!("writing {}: {e}", path.display()))
                    })?;
                    write_bounds_csv(&rows, f)
                }
                None => write_bounds_csv(&rows, io::stdout()),
            };
            res.map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(true)
        }
        Command::OracleCompare { args } => {
            let cfg = load(&args)?;
            println!("{}", cmd_oracle_compare(&cfg)?.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CCPO_LOG_LEVEL", "warn"))
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
