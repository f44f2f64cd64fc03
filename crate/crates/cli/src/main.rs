use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};
use setbo::wind_stats::ColumnSpec;
use setbo_cli::commands::{self, CliError, FitDistArgs, RunArgs};

#[derive(Parser)]
#[command(name = "setbo", version, about = "Set-based multi-objective Bayesian optimisation of wind-farm layouts")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the joint wind speed/direction distribution from a CSV of observations.
    FitDist {
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        v_max: Option<usize>,
        /// Read column names, v_max and jitter from the [wind] section.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, requires = "direction_column")]
        speed_column: Option<String>,
        #[arg(long, requires = "speed_column")]
        direction_column: Option<String>,
        #[arg(long)]
        jitter: Option<f64>,
    },
    /// Run the optimisation for each seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured seeds; repeatable.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Discard saved run state instead of resuming it.
        #[arg(long)]
        restart: bool,
    },
    /// Print the objectives of a layout file.
    Evaluate {
        layout: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Write plot-ready hypervolume and Pareto-front data for a run directory.
    Report {
        run_dir: PathBuf,
        /// Defaults to <RUN_DIR>/report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::FitDist {
            csv,
            out,
            v_max,
            config,
            speed_column,
            direction_column,
            jitter,
        } => {
            let columns = speed_column.zip(direction_column).map(|(speed, direction)| ColumnSpec { speed, direction });
            commands::fit_dist(&FitDistArgs {
                csv,
                out,
                v_max,
                config,
                columns,
                jitter,
            })?;
        }
        Command::Run {
            config,
            seeds,
            out,
            restart,
        } => {
            commands::run(&RunArgs {
                config,
                seeds,
                out,
                restart,
            })?;
        }
        Command::Evaluate { layout, config } => {
            let r = commands::evaluate(&layout, &config)?;
            println!("power,cost,n_turbines");
            println!("{},{},{}", r.power, r.cost, r.n_turbines);
        }
        Command::Report { run_dir, out } => {
            let out = out.unwrap_or_else(|| run_dir.join("report"));
            for p in commands::report(&run_dir, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SETBO_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
