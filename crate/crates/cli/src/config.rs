//! `key = value` config files merged beneath command-line flags.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command};

/// One `key = value` entry with its line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Blank lines and `#` comments are skipped; `_` in keys reads as `-`.
pub fn parse(text: &str) -> Result<Vec<Entry>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("line {}: expected `key = value`", i + 1));
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        out.push(Entry {
            key,
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

/// Extra arguments that supply config values for options not given as flags.
///
/// Keys naming an option of another subcommand are ignored; keys unknown to
/// every subcommand are rejected.
pub fn injected_args(
    cmd: &Command,
    sub: &str,
    matches: &ArgMatches,
    path: &Path,
) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    let entries = parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let target = cmd.find_subcommand(sub).context("unknown subcommand")?;
    let mut args = Vec::new();
    for e in entries {
        let find = |c: &Command| {
            c.get_arguments()
                .find(|a| a.get_long() == Some(e.key.as_str()))
                .cloned()
        };
        let Some(arg) = find(target) else {
            if cmd.get_subcommands().any(|c| find(c).is_some()) {
                continue;
            }
            bail!("{}:{}: unknown key {:?}", path.display(), e.line, e.key);
        };
        if e.key == "config" {
            bail!(
                "{}:{}: config files cannot include other config files",
                path.display(),
                e.line
            );
        }
        if matches.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match e.value.as_str() {
                "true" | "1" | "yes" => args.push(OsString::from(format!("--{}", e.key))),
                "false" | "0" | "no" => {}
                other => bail!(
                    "{}:{}: {:?} is not a boolean",
                    path.display(),
                    e.line,
                    other
                ),
            },
            _ => args.push(OsString::from(format!("--{}={}", e.key, e.value))),
        }
    }
    Ok(args)
}
