//! Flat `key = value` config files.
//!
//! Entries are turned into `--key value` arguments placed before the ones
//! given on the command line, so a flag always overrides the file and the
//! file overrides the built-in default.

use std::ffi::OsString;
use std::path::Path;

use amsum::{Error, Result};
use clap::Command;

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
/// Keys may use `_` or `-`.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`", i + 1)));
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        let value = value.trim().to_string();
        match entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => entries.push((key, value)),
        }
    }
    Ok(entries)
}

pub fn load_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Finds the value of `--config` among raw arguments, if any.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
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

/// Converts config entries into arguments for `subcommand`. Keys that belong
/// to other subcommands are skipped; keys no subcommand knows are errors.
pub fn config_args(root: &Command, subcommand: &str, entries: &[(String, String)]) -> Result<Vec<OsString>> {
    let Some(sub) = root.find_subcommand(subcommand) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            return Err(Error::Config("a config file cannot name another config file".into()));
        }
        match sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) {
            Some(arg) if arg.get_action().takes_values() => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
            Some(_) => match value.as_str() {
                "true" => out.push(format!("--{key}").into()),
                "false" => {}
                other => {
                    return Err(Error::Config(format!("`{key}` expects true or false, got `{other}`")))
                }
            },
            None => {
                let known = root
                    .get_subcommands()
                    .any(|s| s.get_arguments().any(|a| a.get_long() == Some(key.as_str())));
                if !known {
                    return Err(Error::Config(format!("unknown config key `{key}`")));
                }
            }
        }
    }
    Ok(out)
}
