//! `--config` files: one `key = value` per line, keys named after long flags.
//! Blank lines and lines starting with `#` are ignored. Values become flags
//! appended to the command line unless that flag was already given.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, CommandFactory};

use crate::args::Cli;

/// Returns the `--config` path, if any, without parsing the rest.
pub fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut iter = argv.iter();
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy();
        if text == "--" {
            break;
        }
        if text == "--config" {
            return iter.next().cloned();
        }
        if let Some(path) = text.strip_prefix("--config=") {
            return Some(path.into());
        }
    }
    None
}

fn given(argv: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    let prefix = format!("--{long}=");
    argv.iter().map(|a| a.to_string_lossy()).any(|a| a == flag || a.starts_with(&prefix))
}

/// Appends flags from the config text to `argv` for the subcommand named in it.
pub fn merge(argv: &[OsString], text: &str, origin: &Path) -> Result<Vec<OsString>> {
    let cli = Cli::command();
    let Some(sub) = argv
        .iter()
        .skip(1)
        .find_map(|a| cli.get_subcommands().find(|s| s.get_name() == a.to_string_lossy()))
    else {
        return Ok(argv.to_vec());
    };
    let mut merged = argv.to_vec();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let where_ = || format!("{}:{}", origin.display(), n + 1);
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}: expected `key = value`", where_());
        };
        let (key, value) = (key.trim(), value.trim());
        if key == "config" {
            bail!("{}: config files cannot include other config files", where_());
        }
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key)) else {
            bail!("{}: `{key}` is not a flag of `{}`", where_(), sub.get_name());
        };
        if given(argv, key) {
            continue;
        }
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            let on: bool = value
                .parse()
                .with_context(|| format!("{}: `{key}` expects true or false", where_()))?;
            if on {
                merged.push(format!("--{key}").into());
            }
        } else {
            merged.push(format!("--{key}").into());
            merged.push(value.into());
        }
    }
    Ok(merged)
}
