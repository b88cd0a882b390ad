use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qualdyn_cli::commands::{
    cmd_find, cmd_fit, cmd_run, cmd_sweep, FindArgs, FitArgs, RunArgs, SweepArgs,
};
use qualdyn_cli::verify::run_suite;
use qualdyn_cli::Failure;

#[derive(Parser)]
#[command(
    name = "qualdyn",
    version,
    about = "Qualification dynamics under best-response assessment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate the dynamics from one initial state.
    Run {
        /// Scenario file (.toml, or .json).
        #[arg(long)]
        config: PathBuf,
        /// Initial rates, one per group or a single shared value.
        #[arg(long, value_delimiter = ',')]
        init: Option<Vec<f64>>,
        /// Trace file (one JSON record per line).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Use per-group policies instead of a shared one.
        #[arg(long)]
        decoupled: bool,
    },
    /// Run from a grid of shared initial rates.
    Sweep {
        /// Scenario file (.toml, or .json).
        #[arg(long)]
        config: PathBuf,
        /// Number of evenly spaced initial rates in [0, 1].
        #[arg(long, default_value_t = 11)]
        grid: usize,
        /// Comma-separated table; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also run decoupled dynamics and report the difference.
        #[arg(long)]
        decoupled: bool,
    },
    /// Enumerate equilibria and compare with closed forms.
    Find {
        /// Scenario file (.toml, or .json).
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated equilibrium table.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Use per-group policies instead of a shared one.
        #[arg(long)]
        decoupled: bool,
    },
    /// Fit Beta score distributions to a histogram file.
    Fit {
        /// CSV with columns group,label,score,count.
        histogram: PathBuf,
        /// Feature block for a scenario file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fit to this many points resampled from the histogram.
        #[arg(long)]
        resample: Option<usize>,
        /// Seed for resampling.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a built-in verification suite.
    Verify {
        /// One of: realizable, near-realizable, uniform, gaussian, multi-eq, subsidy, decoupling.
        suite: String,
    },
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Run {
            config,
            init,
            out: path,
            seed,
            decoupled,
        } => cmd_run(
            &RunArgs {
                config,
                init,
                out: path,
                seed,
                decoupled,
            },
            out,
        ),
        Command::Sweep {
            config,
            grid,
            out: path,
            seed,
            decoupled,
        } => cmd_sweep(
            &SweepArgs {
                config,
                grid,
                out: path,
                seed,
                decoupled,
            },
            out,
        ),
        Command::Find {
            config,
            out: path,
            seed,
            decoupled,
        } => cmd_find(
            &FindArgs {
                config,
                out: path,
                seed,
                decoupled,
            },
            out,
        ),
        Command::Fit {
            histogram,
            out: path,
            resample,
            seed,
        } => cmd_fit(
            &FitArgs {
                histogram,
                out: path,
                resample,
                seed,
            },
            out,
        ),
        Command::Verify { suite } => {
            if run_suite(&suite, out)? {
                Ok(())
            } else {
                Err(Failure::config(format!("suite `{suite}` failed")))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = dispatch(cli.command, &mut out);
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
