//! Flat `key = value` config files.
//!
//! Keys are long flag names (`n-grid`, or `n_grid`). Before argument parsing
//! every key that is not already given on the command line is appended as
//! `--key=value`, so flags always win. Boolean keys take `true` or `false`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use clap::{ArgAction, Command};
use serde_json::Value;

pub fn parse(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", i + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("config line {}: empty key", i + 1));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn config_path(argv: &[String]) -> Result<Option<String>, String> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned().map(Some).ok_or_else(|| "--config needs a path".to_string());
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Ok(Some(p.to_string()));
        }
    }
    Ok(None)
}

fn is_flag(cmd: &Command, key: &str) -> bool {
    let find = |c: &Command| {
        c.get_arguments()
            .find(|a| a.get_long() == Some(key))
            .map(|a| matches!(a.get_action(), ArgAction::SetTrue | ArgAction::SetFalse))
    };
    find(cmd).or_else(|| cmd.get_subcommands().find_map(find)).unwrap_or(false)
}

/// Returns `argv` extended with the entries of the `--config` file, if any.
pub fn merge_into_args(argv: Vec<String>, cmd: &Command) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&argv)? else {
        return Ok(argv);
    };
    let text = fs::read_to_string(Path::new(&path)).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let entries = parse(&text)?;
    let mut out = argv;
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        let long = format!("--{key}");
        let eq = format!("--{key}=");
        if out.iter().any(|a| *a == long || a.starts_with(&eq)) {
            continue;
        }
        if is_flag(cmd, &key) {
            match value.to_ascii_lowercase().as_str() {
                "true" => out.push(long),
                "false" => {}
                _ => return Err(format!("config key {key} expects true or false, got {value:?}")),
            }
        } else {
            out.push(format!("{eq}{value}"));
        }
    }
    Ok(out)
}

fn render(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Array(a) if a.is_empty() => None,
        Value::Array(a) => Some(a.iter().filter_map(render).collect::<Vec<_>>().join(",")),
        other => Some(other.to_string()),
    }
}

/// `key = value` lines for every non-null field of the serialised records,
/// in the order given and then by key.
pub fn resolved(records: &[Value]) -> String {
    let mut out = String::new();
    for r in records {
        if let Value::Object(map) = r {
            let sorted: BTreeMap<_, _> = map.iter().collect();
            for (k, v) in sorted {
                if let Some(s) = render(v) {
                    out.push_str(&format!("{k} = {s}\n"));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_underscores() {
        let m = parse("# x\nn_grid = 1,2\n\nseed=4\n").unwrap();
        assert_eq!(m["n-grid"], "1,2");
        assert_eq!(m["seed"], "4");
        assert!(parse("oops\n").is_err());
    }

    #[test]
    fn resolved_renders_lists() {
        let v = serde_json::json!({"b": [1, 2], "a": "x", "c": null});
        assert_eq!(resolved(&[v]), "a = x\nb = 1,2\n");
    }
}
