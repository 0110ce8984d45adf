//! `--config <file.json>` support: a JSON object whose keys are long flag
//! names of the chosen subcommand. Its entries are spliced into the argument
//! list ahead of the explicit flags, so explicit flags win and unknown keys
//! are rejected by the regular argument parser.

use std::ffi::OsString;
use std::path::Path;

use landcover::Error;
use serde_json::Value;

/// Removes `--config <path>` / `--config=<path>` from `args` and returns the
/// path, if present.
fn take_config(args: &mut Vec<OsString>) -> Result<Option<OsString>, Error> {
    let mut found = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy().into_owned();
        if a == "--" {
            break;
        }
        if a == "--config" {
            if i + 1 >= args.len() {
                return Err(Error::InvalidArgument("--config needs a file path".into()));
            }
            found = Some(args.remove(i + 1));
            args.remove(i);
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            found = Some(OsString::from(p));
            args.remove(i);
            continue;
        }
        i += 1;
    }
    Ok(found)
}

fn value_text(key: &str, v: &Value) -> Result<String, Error> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Array(items) => items
            .iter()
            .map(|i| match i {
                Value::Array(_) | Value::Object(_) | Value::Null => {
                    Err(Error::InvalidArgument(format!("config key `{key}`: nested values are not flags")))
                }
                other => value_text(key, other),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|v| v.join(",")),
        Value::Null | Value::Object(_) => Err(Error::InvalidArgument(format!(
            "config key `{key}` must be a string, number, boolean or list"
        ))),
    }
}

/// Flags equivalent to the JSON object in `path`.
pub fn config_flags(path: &Path) -> Result<Vec<OsString>, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(Error::InvalidArgument(format!("{}: expected a JSON object", path.display())));
    };
    map.iter()
        .map(|(k, v)| {
            let flag = k.replace('_', "-");
            Ok(OsString::from(format!("--{flag}={}", value_text(k, v)?)))
        })
        .collect()
}

/// Expands `--config` into explicit flags placed right after the subcommand.
pub fn expand(mut args: Vec<OsString>) -> Result<Vec<OsString>, Error> {
    let Some(path) = take_config(&mut args)? else {
        return Ok(args);
    };
    let flags = config_flags(Path::new(&path))?;
    let at = 2.min(args.len());
    args.splice(at..at, flags);
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"trees": 5, "test_set_weighting": true, "sizes": [100, 200]}"#).unwrap();
        let args = os(&["landcover", "train", "--config", p.to_str().unwrap(), "--seed", "3"]);
        let out = expand(args).unwrap();
        let s: Vec<String> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(s[..2], ["landcover", "train"]);
        assert!(s.contains(&"--trees=5".to_string()));
        assert!(s.contains(&"--test-set-weighting=true".to_string()));
        assert!(s.contains(&"--sizes=100,200".to_string()));
        assert_eq!(s[s.len() - 2..], ["--seed", "3"]);
    }

    #[test]
    fn rejects_non_objects() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, "[1]").unwrap();
        assert!(config_flags(&p).is_err());
        std::fs::write(&p, r#"{"a": {"b": 1}}"#).unwrap();
        assert!(config_flags(&p).is_err());
        assert!(expand(os(&["landcover", "train", "--config"])).is_err());
    }
}
