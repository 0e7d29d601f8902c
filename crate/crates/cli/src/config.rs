//! `--config file.json`: the file's keys become flags placed before the ones given
//! on the command line, so explicit flags win.

use serde_json::Value;
use std::ffi::OsString;

fn flag_name(key: &str) -> String {
    format!("--{}", key.replace('_', "-"))
}

fn scalar(key: &str, v: &Value) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(format!("config key '{key}' has unsupported value {other}")),
    }
}

/// Converts a JSON object to flag arguments.
pub fn config_to_args(text: &str) -> Result<Vec<OsString>, String> {
    let root: Value = serde_json::from_str(text).map_err(|e| format!("invalid config file: {e}"))?;
    let Value::Object(map) = root else {
        return Err("config file must hold a JSON object".into());
    };
    let mut args = Vec::new();
    for (key, v) in &map {
        match v {
            Value::Bool(true) => args.push(flag_name(key).into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                args.push(flag_name(key).into());
                for item in items {
                    args.push(scalar(key, item)?.into());
                }
            }
            other => args.push(format!("{}={}", flag_name(key), scalar(key, other)?).into()),
        }
    }
    Ok(args)
}

/// Removes `--config <path>` / `--config=<path>` from `args` and splices the
/// file's flags in right after the subcommand.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path: Option<OsString> = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            rest.push(a);
            rest.extend(it.by_ref());
            break;
        }
        if s == "--config" {
            path = Some(it.next().ok_or("--config needs a file path")?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config file {}: {e}", path.to_string_lossy()))?;
    let extra = config_to_args(&text)?;
    // Position right after the first non-flag argument, i.e. the subcommand.
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 2)
        .unwrap_or(rest.len());
    rest.splice(at..at, extra);
    Ok(rest)
}
