//! The `bbmsf` command line.
//!
//! Exit status: 0 on success, 1 on a numerical failure (no convergence, the
//! converter leaving CCM, an incomplete core reset, or a failed `verify`),
//! 2 on a configuration or validation error.

// Range checks are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

#[derive(Debug)]
pub enum CliError {
    /// Bad input; every problem found is listed.
    Config(Vec<String>),
    Numerical(String),
    /// `verify` ran to completion but some checks failed.
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::ChecksFailed(_) => 1,
        }
    }
}

impl From<bbmsf_core::Error> for CliError {
    fn from(e: bbmsf_core::Error) -> Self {
        use bbmsf_core::Error;
        match e {
            Error::InvalidParams(v) => CliError::Config(v.into_iter().map(|v| format!("{}: {}", v.field, v.message)).collect()),
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Config(vec![e.to_string()]),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(vec![format!("i/o error: {e}")])
    }
}

#[derive(Debug, Parser)]
#[command(name = "bbmsf", version, about = "Analysis, simulation and design of the buck-boost modified series forward converter")]
pub struct Cli {
    /// Reserved for future stochastic analyses; currently has no effect.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BodeMethod {
    Analytic,
    Numeric,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form steady-state report (JSON).
    Analyze {
        #[arg(long, default_value = "table4.json")]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One period of the simulated periodic steady state (CSV).
    Simulate {
        #[arg(long, default_value = "table4.json")]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frequency response (CSV).
    Bode {
        #[arg(long, default_value = "table4.json")]
        config: PathBuf,
        /// gvd, gvv or zo; repeat for several.
        #[arg(long, default_value = "gvd")]
        kind: Vec<String>,
        #[arg(long, default_value_t = 10.0)]
        fmin: f64,
        #[arg(long, default_value_t = 20e3)]
        fmax: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, value_enum, default_value = "analytic")]
        method: BodeMethod,
        /// Integration steps per switching period for the numeric sweep.
        #[arg(long)]
        steps_per_period: Option<usize>,
        /// Perturbation amplitude as a fraction of the operating value.
        #[arg(long, default_value_t = 0.01)]
        amplitude: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Operating points, stress envelope and losses for a design (JSON).
    Design {
        #[arg(long, default_value = "design_table6.json")]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-converter voltages and string current for a string scenario.
    String {
        #[arg(long, default_value = "scenario_e1.json")]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check closed forms against the simulator and reference values.
    Verify {
        #[arg(long, default_value = "table4.json")]
        config: PathBuf,
    },
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Config(msgs) => {
                    eprintln!("error: invalid input");
                    for m in msgs {
                        eprintln!("  - {m}");
                    }
                }
                CliError::Numerical(m) => eprintln!("error: {m}"),
                CliError::ChecksFailed(n) => eprintln!("verify: {n} check(s) failed"),
            }
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { config, out } => commands::analyze(&config, out.as_deref()),
        Command::Simulate { config, out } => commands::simulate(&config, out.as_deref()),
        Command::Bode { config, kind, fmin, fmax, points, method, steps_per_period, amplitude, out } => {
            commands::bode(&commands::BodeArgs {
                config,
                kinds: kind,
                fmin,
                fmax,
                points,
                method,
                steps_per_period,
                amplitude,
                out,
            })
        }
        Command::Design { spec, out } => commands::design(&spec, out.as_deref()),
        Command::String { scenario, format, out } => commands::string(&scenario, format, out.as_deref()),
        Command::Verify { config } => commands::verify(&config),
    }
}
