//! `ransomflow` command-line entry point.

mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use crate::args::{Cli, Command};

/// Marks an error as an internal failure (exit code 2) rather than bad input.
#[derive(Debug, Clone, Copy)]
pub struct Internal;

impl fmt::Display for Internal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("internal failure")
    }
}

fn resolve_argv() -> Result<Vec<OsString>> {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let Some(path) = config::config_path(&argv) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    config::merge(&argv, &text, path)
}

/// Prints the arguments a rerun needs, config values included.
fn echo(argv: &[OsString], cli: &Cli) {
    let mut shown = Vec::new();
    let mut iter = argv.iter().skip(1).map(|a| a.to_string_lossy());
    while let Some(a) = iter.next() {
        if a == "--config" {
            iter.next();
        } else if !a.starts_with("--config=") {
            shown.push(a.into_owned());
        }
    }
    let seed = match &cli.command {
        Command::Train(a) => Some(a.model.seed),
        Command::Eval(a) => Some(a.model.seed),
        Command::Bench(a) => Some(a.model.seed),
        Command::Extract(_) | Command::Label(_) | Command::Detect(_) => None,
    };
    match seed {
        Some(seed) if !shown.iter().any(|a| a == "--seed" || a.starts_with("--seed=")) => {
            eprintln!("ransomflow {} --seed {seed}", shown.join(" "))
        }
        _ => eprintln!("ransomflow {}", shown.join(" ")),
    }
}

fn run() -> Result<()> {
    let argv = resolve_argv()?;
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors.
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    echo(&argv, &cli);
    match &cli.command {
        Command::Extract(a) => commands::extract(a),
        Command::Label(a) => commands::label(a),
        Command::Train(a) => commands::train_model(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::Detect(a) => commands::detect(a),
    }
}

fn main() -> ExitCode {
    match std::panic::catch_unwind(run) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            let internal = e.downcast_ref::<Internal>().is_some();
            // Skip the marker itself when printing the chain.
            let marker = Internal.to_string();
            let messages: Vec<String> = e.chain().map(ToString::to_string).filter(|m| *m != marker).collect();
            eprintln!("error: {}", messages.join(": "));
            ExitCode::from(if internal { 2 } else { 1 })
        }
        Err(_) => ExitCode::from(2),
    }
}
