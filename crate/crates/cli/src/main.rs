//! `netident` command-line front end.
//!
//! Exit status: 0 success, 1 a condition check failed, 2 bad input,
//! 3 numerical failure. Node indices on the command line and in every file
//! are one-based.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// A requested setup does not satisfy the graph conditions.
    Condition(String),
    Input(String),
    Numerical(String),
}

impl From<netident::Error> for CliError {
    fn from(e: netident::Error) -> Self {
        if matches!(e, netident::Error::Infeasible(_)) {
            CliError::Condition(e.to_string())
        } else if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "netident",
    version,
    about = "Local module identification in dynamic networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Plain-text summary instead of JSON.
    #[arg(long, global = true)]
    pub text: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a network document for well-posedness, stability and noise-model properties.
    Validate { network: PathBuf },
    /// Choose predictor inputs and outputs for a target module.
    Select {
        network: PathBuf,
        #[command(flatten)]
        target: TargetArgs,
    },
    /// Graph, delay and informativity conditions of a selection.
    Check {
        network: PathBuf,
        #[command(flatten)]
        sel: SelectionArgs,
        /// Allow direct feedthrough in every model entry.
        #[arg(long)]
        proper_model: bool,
        #[command(flatten)]
        exc: ExcitationArgs,
        #[arg(long, default_value_t = 128)]
        grid: usize,
        /// Lower bound on the smallest eigenvalue of the regressor spectrum.
        #[arg(long, default_value_t = 1e-8)]
        informativity_tol: f64,
    },
    /// Immerse, transform and verify invariance of the target module.
    Transform {
        network: PathBuf,
        #[command(flatten)]
        sel: SelectionArgs,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 256)]
        grid: usize,
    },
    /// Simulate node signals and write a dataset.
    Simulate {
        network: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = netident::simulation::DEFAULT_BURN_IN)]
        burn_in: usize,
        #[command(flatten)]
        exc: ExcitationArgs,
        /// Dataset file to write.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Estimate the target module from a dataset.
    Identify {
        network: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        setup: SetupArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Repeated fits on independent simulated records.
    Montecarlo {
        network: PathBuf,
        #[command(flatten)]
        setup: SetupArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, default_value_t = 50)]
        replicas: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = netident::simulation::DEFAULT_BURN_IN)]
        burn_in: usize,
        #[command(flatten)]
        exc: ExcitationArgs,
        /// Keep per-replica coefficient vectors in the report.
        #[arg(long)]
        samples: bool,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Full,
    Min,
    User,
}

#[derive(Args, Debug, Clone)]
pub struct TargetArgs {
    /// Target module `G_ji` as `J I`.
    #[arg(long, num_args = 2, value_names = ["J", "I"])]
    pub target: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    pub mode: Mode,
    /// Measurable nodes, comma separated (only with `--mode user`).
    #[arg(long, value_delimiter = ',')]
    pub accessible: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone)]
pub struct SelectionArgs {
    /// Selection document, or a `select` report.
    #[arg(long, conflicts_with = "target")]
    pub selection: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["J", "I"])]
    pub target: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    pub mode: Mode,
    #[arg(long, value_delimiter = ',')]
    pub accessible: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone)]
pub struct SetupArgs {
    #[command(flatten)]
    pub sel: SelectionArgs,
    /// Scalar-output predictor of `w_J` from these inputs instead of the MIMO setup.
    #[arg(long, value_delimiter = ',')]
    pub miso_inputs: Option<Vec<usize>>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Wls,
    Ml,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    #[arg(long, value_enum, default_value_t = CriterionArg::Wls)]
    pub criterion: CriterionArg,
    /// Model orders document; flags below override its defaults.
    #[arg(long)]
    pub orders: Option<PathBuf>,
    #[arg(long)]
    pub nb: Option<usize>,
    #[arg(long)]
    pub na: Option<usize>,
    #[arg(long)]
    pub delay: Option<usize>,
    #[arg(long)]
    pub nc: Option<usize>,
    #[arg(long)]
    pub nf: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run everything on the calling thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ExcitationArgs {
    /// Excitation document; default is unit white noise on every external signal.
    #[arg(long)]
    pub excitation: Option<PathBuf>,
}

fn main() -> ExitCode {
    netident::par::init_threads_from_env();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(report) => {
            let text = if cli.text {
                report.to_text()
            } else {
                report.to_json()
            };
            let written = match &cli.report {
                Some(p) => std::fs::write(p, text)
                    .map_err(|e| format!("cannot write {}: {e}", p.display())),
                None => {
                    print!("{text}");
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(CliError::Condition(msg)) => {
            eprintln!("condition failed: {}", msg.replace('\n', " "));
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {}", msg.replace('\n', " "));
            ExitCode::from(3)
        }
    }
}
