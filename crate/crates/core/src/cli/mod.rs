//! Command-line entry points: `solve`, `refine`, `eval`, `gradcheck` and
//! `bench`.
//!
//! Every subcommand reads an optional TOML/JSON [`RunConfig`], applies the
//! flags on top, validates, and only then computes. Outputs are
//! byte-identical for a fixed seed; the one exception is the wall-clock file
//! written by `bench`.
//!
//! Exit codes: 0 on success, 1 for invalid input, 2 for numerical failure.

mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

pub use args::{BenchArgs, Cli, Command, CommonArgs, EvalArgs, GradcheckArgs, ModeArg, RefineArgs, SolveArgs};
pub use commands::{
    cmd_bench, cmd_eval, cmd_gradcheck, cmd_refine, cmd_solve, load_scenes, SCHEMA_BENCH, SCHEMA_BENCH_TIMINGS,
    SCHEMA_EVAL, SCHEMA_GRADCHECK, SCHEMA_POSES, SCHEMA_PROBLEM, SCHEMA_REFINE, SCHEMA_REFINE_TRACE, SCHEMA_SOLVE,
    SCHEMA_SOLVE_TRACE, SCHEMA_SWEEP,
};
pub use config::{
    BenchConfig, GradcheckConfig, ObjectSeeds, PerturbationConfig, RunConfig, SweepConfig, ORACLE_SEED_OFFSET,
};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad flags, configs or input files.
    Input(String),
    /// Collapsed masks, unrecovered rank deficiency, failed gradient checks.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Underdetermined { .. } | Error::MissingTrace(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, m: &log::Metadata<'_>) -> bool {
        m.level() <= log::max_level()
    }

    fn log(&self, r: &log::Record<'_>) {
        if self.enabled(r.metadata()) {
            eprintln!("{}: {}", r.level().as_str().to_ascii_lowercase(), r.args());
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLogger = StderrLogger;

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(log::LevelFilter::Warn);
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Solve(a) => cmd_solve(a),
        Command::Refine(a) => cmd_refine(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Bench(a) => cmd_bench(a),
    }
}
