//! `--config FILE`: flags read from a TOML table and spliced in front of
//! the command-line flags, which therefore take precedence.

use std::ffi::OsString;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Flags equivalent to a TOML table: `key = value` becomes `--key value`,
/// `key = true` becomes `--key`, arrays become comma-separated values.
pub fn flags_from_toml(text: &str) -> CliResult<Vec<OsString>> {
    let table: toml::Table = text.parse().map_err(|e| CliError::Usage(format!("bad config file: {e}")))?;
    let mut out = Vec::new();
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &toml::Value| -> CliResult<String> {
            match v {
                toml::Value::String(s) => Ok(s.clone()),
                toml::Value::Integer(i) => Ok(i.to_string()),
                toml::Value::Float(f) => Ok(f.to_string()),
                toml::Value::Boolean(b) => Ok(b.to_string()),
                _ => Err(CliError::Usage(format!("config key `{key}` has an unsupported value"))),
            }
        };
        match &value {
            toml::Value::Boolean(true) => out.push(flag.into()),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                let joined = items.iter().map(scalar).collect::<CliResult<Vec<_>>>()?.join(",");
                out.push(flag.into());
                out.push(joined.into());
            }
            v => {
                out.push(flag.into());
                out.push(scalar(v)?.into());
            }
        }
    }
    Ok(out)
}

/// Removes `--config FILE` from `args` and inserts the file's flags right
/// after the subcommand name.
pub fn expand_config(mut args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut path = None;
    let mut i = 0;
    while i < args.len() {
        let s = args[i].to_string_lossy().into_owned();
        if s == "--config" {
            if i + 1 >= args.len() {
                return Err(CliError::Usage("--config needs a file path".into()));
            }
            path = Some(args[i + 1].clone());
            args.drain(i..i + 2);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else { return Ok(args) };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let flags = flags_from_toml(&text)?;
    // args[0] is the program, args[1] the subcommand
    let at = args.len().min(2);
    args.splice(at..at, flags);
    Ok(args)
}
