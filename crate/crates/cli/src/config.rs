//! Flag files: a JSON object whose keys are long flag names. Its flags are
//! spliced in front of the command line so explicit flags override them.

use std::path::Path;

use serde_json::Value;

use crate::error::{json_error, CliError, CliResult};

/// Subcommands whose `--config` is an experiment config rather than a flag file.
const OWN_CONFIG: [&str; 1] = ["simulate"];

fn config_path(args: &[String]) -> Option<String> {
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        if a == "--config" {
            return iter.next().cloned();
        }
        if let Some(path) = a.strip_prefix("--config=") {
            return Some(path.to_string());
        }
    }
    None
}

fn flag_args(path: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| json_error("config", &e))?;
    let Value::Object(map) = value else {
        return Err(CliError::config(
            "config",
            "expected a JSON object of flag values",
        ));
    };
    let mut out = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Bool(true) => out.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Number(n) => out.push(format!("{flag}={n}")),
            Value::String(s) => out.push(format!("{flag}={s}")),
            Value::Array(_) | Value::Object(_) => {
                return Err(CliError::config(key, "flag values must be scalars"));
            }
        }
    }
    Ok(out)
}

/// Expand a flag file into the argument list.
pub fn expand(args: Vec<String>) -> CliResult<Vec<String>> {
    let Some(sub) = args.get(1) else {
        return Ok(args);
    };
    if OWN_CONFIG.contains(&sub.as_str()) {
        return Ok(args);
    }
    let Some(path) = config_path(&args[2..]) else {
        return Ok(args);
    };
    let mut out = args[..2].to_vec();
    out.extend(flag_args(Path::new(&path))?);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}
