//! Plain-text `key = value` run configuration mirroring the command-line flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// A subcommand with every flag value; re-executing it reproduces the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub flags: BTreeMap<String, String>,
}

impl RunConfig {
    /// Flattens a serialized argument struct. `None` and `false` are
    /// omitted, `true` becomes a bare flag, lists are comma-joined.
    pub fn from_args<T: Serialize>(command: &str, args: &T) -> CliResult<Self> {
        let mut flags = BTreeMap::new();
        flatten(&serde_json::to_value(args)?, &mut flags);
        Ok(RunConfig { command: command.to_string(), flags })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# gibbs-ibp {} --config <this file>\n", self.command);
        for (k, v) in &self.flags {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

fn flatten(value: &Value, flags: &mut BTreeMap<String, String>) {
    let Value::Object(map) = value else { return };
    for (k, v) in map {
        let text = match v {
            Value::Null | Value::Bool(false) => continue,
            Value::Bool(true) => "true".to_string(),
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            Value::Array(items) => items.iter().map(scalar_text).collect::<Vec<_>>().join(","),
            Value::Object(_) => {
                flatten(v, flags);
                continue;
            }
        };
        flags.insert(k.clone(), text);
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses `key = value` lines; `#` starts a comment, a leading `--` on keys
/// is allowed.
pub fn parse_config_text(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected `key = value`, got `{line}`", no + 1)))?;
        let key = k.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(CliError::usage(format!("config line {}: empty key", no + 1)));
        }
        pairs.push((key.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn pairs_to_args(pairs: Vec<(String, String)>) -> Vec<OsString> {
    let mut args = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => args.push(format!("--{k}").into()),
            "false" => {}
            _ => {
                args.push(format!("--{k}").into());
                args.push(v.into());
            }
        }
    }
    args
}

/// Removes `--config FILE` from `argv` and splices the file's flags in right
/// after the subcommand name, so explicit flags given later take precedence.
pub fn expand_config(argv: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    if let Some(program) = it.next() {
        rest.push(program);
    }
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            let p = it.next().ok_or_else(|| CliError::usage("--config needs a file path"))?;
            path = Some(p);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(OsString::from(p));
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::usage(format!("cannot read config file {}: {e}", Path::new(&path).display())))?;
    let extra = pairs_to_args(parse_config_text(&text)?);
    let sub = rest.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|i| i + 2);
    match sub {
        Some(at) => {
            let tail = rest.split_off(at);
            rest.extend(extra);
            rest.extend(tail);
            Ok(rest)
        }
        None => Err(CliError::usage("--config requires a subcommand")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_flags() {
        let pairs = parse_config_text("# run\nn = 5\n--seed=7 # trailing\n\nverbose = true\n").unwrap();
        assert_eq!(pairs, vec![("n".into(), "5".into()), ("seed".into(), "7".into()), ("verbose".into(), "true".into())]);
        assert!(parse_config_text("no equals sign").is_err());
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.conf");
        std::fs::write(&f, "n = 3\nfix-gamma = true\nquiet = false\n").unwrap();
        let argv = os(&["prog", "--config", f.to_str().unwrap(), "simulate", "--n", "9"]);
        let out = expand_config(argv).unwrap();
        assert_eq!(out, os(&["prog", "simulate", "--n", "3", "--fix-gamma", "--n", "9"]));
    }

    #[test]
    fn round_trips_flags() {
        #[derive(Serialize)]
        struct A {
            n: usize,
            gamma: f64,
            tag: Option<String>,
            fix: bool,
            list: Vec<String>,
        }
        let rc = RunConfig::from_args("simulate", &A { n: 3, gamma: 0.1, tag: None, fix: true, list: vec!["a".into(), "b".into()] }).unwrap();
        let pairs = parse_config_text(&rc.to_text()).unwrap();
        assert_eq!(pairs, vec![("fix".into(), "true".into()), ("gamma".into(), "0.1".into()), ("list".into(), "a,b".into()), ("n".into(), "3".into())]);
    }
}
