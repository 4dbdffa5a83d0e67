//! `--config run.json`: keys are long flag names (dashes or underscores),
//! values are scalars, booleans or arrays. The file is expanded into flags
//! placed before the command-line ones, so explicit flags win.

use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, CommandFactory};
use serde_json::Value;

use crate::args::{Cli, Command};

/// Flags that only make sense on the command line.
const RESERVED: [&str; 2] = ["config", "command"];

/// Rewrites `argv` so settings from the config file come first.
///
/// The file may name the subcommand under `"command"` when argv does not.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("config {} is not JSON: {e}", path.display()))?;
    let Value::Object(map) = value else {
        return Err(format!("config {} must hold a JSON object", path.display()));
    };

    let position = argv
        .iter()
        .position(|a| Command::NAMES.iter().any(|n| a.to_str() == Some(n)));
    let (sub, insert_at, mut out) = match position {
        Some(i) => (argv[i].to_string_lossy().into_owned(), i + 1, argv.clone()),
        None => {
            let name = match map.get("command") {
                Some(Value::String(s)) => s.clone(),
                _ => return Err("no subcommand on the command line or under \"command\" in the config".into()),
            };
            let mut v = argv.clone();
            v.insert(1, OsString::from(&name));
            (name, 2, v)
        }
    };

    let root = Cli::command();
    let cmd = root
        .find_subcommand(&sub)
        .ok_or_else(|| format!("unknown subcommand {sub}"))?;
    let mut flags: Vec<OsString> = Vec::new();
    for (key, value) in &map {
        let long = key.replace('_', "-");
        if RESERVED.contains(&long.as_str()) {
            continue;
        }
        let arg = cmd
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(long.as_str()))
            .ok_or_else(|| format!("config key {key:?} is not a flag of {sub}"))?;
        match (arg.get_action(), value) {
            (ArgAction::SetTrue, Value::Bool(true)) => flags.push(format!("--{long}").into()),
            (ArgAction::SetTrue, Value::Bool(false)) => {}
            (ArgAction::SetTrue, _) => return Err(format!("config key {key:?} takes true or false")),
            (_, v) => {
                flags.push(format!("--{long}").into());
                flags.push(scalar_list(key, v)?.into());
            }
        }
    }
    out.splice(insert_at..insert_at, flags);
    Ok(out)
}

fn config_path(argv: &[OsString]) -> Option<std::path::PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(|p| Path::new(p).to_path_buf());
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

fn scalar(key: &str, v: &Value) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(format!("config key {key:?} must be a scalar or a list of scalars")),
    }
}

fn scalar_list(key: &str, v: &Value) -> Result<String, String> {
    match v {
        Value::Array(items) => Ok(items.iter().map(|i| scalar(key, i)).collect::<Result<Vec<_>, _>>()?.join(",")),
        other => scalar(key, other),
    }
}
