//! `tradepost`: simulate proportional response dynamics from the command line.
//!
//! Exit codes: 0 success, 1 invalid input or I/O failure, 2 numerical
//! degeneracy during a run, 3 the equilibrium oracle did not converge.

mod commands;
mod csv;
mod source;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tradepost_core::Error;

#[derive(Parser)]
#[command(
    name = "tradepost",
    version,
    about = "Proportional response dynamics in linear exchange economies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one dynamic; writes trajectory.csv, summary.json and certificate.json.
    Run(commands::RunArgs),
    /// Compute and verify an equilibrium; writes certificate.json.
    Eq(commands::EqArgs),
    /// Cycle, class and convergence analysis of an existing trajectory.csv.
    Analyze(commands::AnalyzeArgs),
    /// Run pr, lazy and tit-for-tat from matched starting points.
    CompareTft(commands::CompareArgs),
    /// Write an instance file from a generator spec or preset.
    Gen(commands::GenArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.root() {
                Error::NonConvergence(_) => 3,
                root if root.is_degenerate() => 2,
                _ => 1,
            };
        }
    }
    1
}

/// Joins the error chain, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if text.ends_with(&msg) {
            continue;
        }
        if !text.is_empty() {
            text.push_str(": ");
        }
        text.push_str(&msg);
    }
    text
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => commands::run(&args),
        Command::Eq(args) => commands::eq(&args),
        Command::Analyze(args) => commands::analyze(&args),
        Command::CompareTft(args) => commands::compare_tft(&args),
        Command::Gen(args) => commands::gen(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
