//! Flat TOML config files. Every key names a long flag of the subcommand
//! being run; values fill in flags that were not given on the command line.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command};

fn scalar(key: &str, value: &toml::Value) -> Result<String> {
    Ok(match value {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        other => bail!("config key {key:?}: unsupported value {other}"),
    })
}

pub fn load(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    text.parse::<toml::Table>()
        .with_context(|| format!("parsing config {}", path.display()))
}

/// Extra arguments for `sub` taken from `table`. Keys this subcommand does
/// not know are ignored so one file can serve several subcommands.
pub fn injected_args(
    sub: &Command,
    matches: &ArgMatches,
    table: &toml::Table,
) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (raw_key, value) in table {
        let key = raw_key.replace('_', "-");
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
        else {
            continue;
        };
        let id = arg.get_id().as_str();
        if id == "config" || matches.value_source(id) == Some(ValueSource::CommandLine) {
            continue;
        }
        let flag = format!("--{key}");
        match arg.get_action() {
            ArgAction::SetTrue => match value {
                toml::Value::Boolean(true) => out.push(flag.into()),
                toml::Value::Boolean(false) => {}
                _ => bail!("config key {raw_key:?} must be a boolean"),
            },
            _ => {
                let values = match value {
                    toml::Value::Array(items) => items
                        .iter()
                        .map(|v| scalar(raw_key, v))
                        .collect::<Result<Vec<_>>>()?,
                    v => vec![scalar(raw_key, v)?],
                };
                for v in values {
                    out.push(format!("{flag}={v}").into());
                }
            }
        }
    }
    Ok(out)
}
