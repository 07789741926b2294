//! `otconf` command-line tool.
//!
//! Every subcommand reads its inputs, validates them, computes, and only then
//! writes its outputs together with a `<out>.manifest.json` describing the
//! run. Exit status is 0 on success, 2 for invalid input and 1 for failures
//! during computation. `OTCONF_THREADS` caps the worker pool.

mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};
use output::Run;

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("OTCONF_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Validation(format!("OTCONF_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn dispatch(command: &Command) -> CliResult<()> {
    let mut params = serde_json::to_value(command).map_err(|e| CliError::Runtime(e.to_string()))?;
    // drop the variant wrapper, the command name is recorded separately
    if let Some(inner) = params.get_mut(command.name()).map(serde_json::Value::take) {
        params = inner;
    }
    let mut run = Run::new(command.name(), params);
    match command {
        Command::Solve(a) => commands::solve_cmd(a, &mut run)?,
        Command::Score(a) => commands::score_cmd(a, &mut run)?,
        Command::Postcheck(a) => commands::postcheck_cmd(a, &mut run)?,
        Command::Baseline(a) => commands::baseline_cmd(a, &mut run)?,
        Command::Eval(a) => commands::eval_cmd(a, &mut run)?,
        Command::Reweight(a) => commands::reweight_cmd(a, &mut run)?,
        Command::Synth(a) => commands::synth_cmd(a, &mut run)?,
        Command::Sweep(a) => commands::sweep_cmd(a, &mut run)?,
        Command::Bound(a) => commands::bound_cmd(a, &mut run)?,
    }
    run.finish()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|()| dispatch(&cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
