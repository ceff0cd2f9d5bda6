//! `--config` files: TOML whose keys are long flag names.
//!
//! Top-level scalars apply to every subcommand that has the flag; a table
//! named after a subcommand applies only there. Values are spliced into
//! argv ahead of the user's flags, so explicit flags win.

use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;

use crate::args::Cli;
use crate::CliError;

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

fn scalar(key: &str, v: &toml::Value) -> Result<String, CliError> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        other => Err(CliError::Usage(format!("config key {key:?}: unsupported value {other}"))),
    }
}

/// Returns argv with config values inserted after the subcommand name.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&argv) else { return Ok(argv) };
    let Some(sub_pos) = argv.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|p| p + 1) else {
        return Ok(argv);
    };
    let sub = argv[sub_pos].to_string_lossy().to_string();
    let root = Cli::command();
    let Some(cmd) = root.find_subcommand(&sub) else { return Ok(argv) };
    let flags_of = |c: &clap::Command| -> Vec<String> {
        c.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect()
    };
    let here = flags_of(cmd);
    let anywhere: Vec<String> = root.get_subcommands().flat_map(flags_of).collect();

    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", Path::new(&path).display())))?;
    let table: toml::Table =
        text.parse().map_err(|e| CliError::Usage(format!("config {}: {e}", Path::new(&path).display())))?;

    let mut extra: Vec<OsString> = Vec::new();
    let mut push = |key: &str, value: &toml::Value, strict: bool| -> Result<(), CliError> {
        if key == "config" {
            return Err(CliError::Usage("config files cannot include other config files".into()));
        }
        if here.iter().any(|f| f == key) {
            extra.push(format!("--{key}").into());
            extra.push(scalar(key, value)?.into());
            Ok(())
        } else if strict || !anywhere.iter().any(|f| f == key) {
            Err(CliError::Usage(format!("config key {key:?} is not a flag of {sub}")))
        } else {
            Ok(())
        }
    };
    for (key, value) in &table {
        match value {
            toml::Value::Table(section) => {
                if *key == sub {
                    for (k, v) in section {
                        push(k, v, true)?;
                    }
                } else if root.find_subcommand(key).is_none() {
                    return Err(CliError::Usage(format!("config section [{key}] is not a subcommand")));
                }
            }
            v => push(key, v, false)?,
        }
    }
    let mut out = argv;
    out.splice(sub_pos + 1..sub_pos + 1, extra);
    Ok(out)
}
