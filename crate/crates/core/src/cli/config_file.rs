//! `key=value` config files, spliced into the argument list ahead of the
//! user's own flags so that flags win.

use std::path::Path;

use crate::error::{Error, Result};

pub fn parse(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: n as u64 + 1,
            message: format!("expected key=value, got '{line}'"),
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: n as u64 + 1,
                message: "empty key".into(),
            });
        }
        pairs.push((key, value.trim().to_string()));
    }
    Ok(pairs)
}

fn to_flags(pairs: &[(String, String)]) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => {
                out.push(format!("--{k}"));
                out.push(v.clone());
            }
        }
    }
    out
}

/// Removes `--config <path>` from `args` and inserts the file's settings
/// right after the subcommand name.
pub fn expand(args: Vec<String>) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    if let Some(program) = iter.next() {
        rest.push(program);
    }
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            config = Some(iter.next().ok_or_else(|| Error::validation("--config needs a path"))?);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(arg);
        }
    }
    let Some(config) = config else {
        return Ok(rest);
    };
    let path = Path::new(&config);
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let flags = to_flags(&parse(&text, path)?);
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map_or(rest.len(), |p| p + 2);
    rest.splice(at..at, flags);
    Ok(rest)
}
