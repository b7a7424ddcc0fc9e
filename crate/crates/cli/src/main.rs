//! `ndscheck`: runs the structural checks on model files.
//!
//! Exit status: 0 when every requested check passes, 1 when any check
//! fails, 2 when a check is not well posed or inconclusive (and none
//! fails), 3 on errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nds_core::analysis::{AnalysisOptions, FallbackPolicy};
use nds_core::oracle::ModelMode;
use nds_core::ToleranceConfig;

#[derive(Parser)]
#[command(
    name = "ndscheck",
    version,
    about = "Regularity, observability and controllability checks for networked descriptor systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run checks on a model file and print one JSON report per check.
    Check {
        input: PathBuf,
        /// Check to run; repeat for several. Defaults to regularity,
        /// observability and controllability.
        #[arg(long = "check", value_enum)]
        checks: Vec<CheckKind>,
        #[command(flatten)]
        tol: TolArgs,
        /// Write the reports here instead of standard output.
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Compare the analysis against the dense reference on random models,
    /// or on one model file.
    Verify {
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: u64,
        #[arg(long, value_enum, default_value_t = Mode::Numeric)]
        mode: Mode,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Print a seeded random model.
    GenRandom {
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Mode::Numeric)]
        mode: Mode,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Describe a model's dimensions and per-subsystem structure.
    Explain {
        input: PathBuf,
        #[command(flatten)]
        tol: TolArgs,
    },
}

#[derive(Args)]
struct TolArgs {
    /// Relative rank tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Bound on certificate residuals.
    #[arg(long, default_value_t = 1e-8)]
    residual_tol: f64,
    /// Whether a subsystem with a whole-plane singular set may fall back to
    /// the dense network test.
    #[arg(long, value_enum, default_value_t = Fallback::Allow)]
    fallback: Fallback,
}

impl TolArgs {
    fn options(&self) -> nds_core::Result<AnalysisOptions> {
        let mut opts = AnalysisOptions::from(ToleranceConfig::new(self.tol, self.residual_tol)?);
        opts.fallback = match self.fallback {
            Fallback::Allow => FallbackPolicy::Allow,
            Fallback::Forbid => FallbackPolicy::Forbid,
        };
        Ok(opts)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Fallback {
    Allow,
    Forbid,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum CheckKind {
    Regularity,
    Observability,
    Controllability,
    SubsystemDesign,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Numeric,
    Lft,
}

impl From<Mode> for ModelMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Numeric => ModelMode::Numeric,
            Mode::Lft => ModelMode::Lft,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check {
            input,
            checks,
            tol,
            json_out,
        } => tol
            .options()
            .and_then(|o| commands::check(&input, &checks, &o, json_out.as_deref())),
        Command::Verify {
            input,
            seed,
            count,
            mode,
            tol,
        } => tol
            .options()
            .and_then(|o| commands::verify(input.as_deref(), seed, count, mode.into(), &o)),
        Command::GenRandom {
            seed,
            mode,
            json_out,
        } => commands::gen_random(seed, mode.into(), json_out.as_deref()),
        Command::Explain { input, tol } => {
            tol.options().and_then(|o| commands::explain(&input, &o))
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
