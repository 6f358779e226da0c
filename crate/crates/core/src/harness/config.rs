//! Plain-text configuration files.
//!
//! One `key = value` pair per line; `#` starts a comment; blank lines are
//! ignored. Keys are the long flag names of the subcommand being run
//! (`max-lag = 14`, `series = data/series.csv`). A value of `true` turns a
//! switch on and `false` leaves it off. Flags given on the command line take
//! precedence over the file.

use std::path::Path;

use crate::error::{Error, Result};

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(format!("line {}", k + 1), "expected `key = value`"))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::parse(format!("line {}", k + 1), format!("invalid key {key:?}")));
        }
        if entries.iter().any(|(e, _)| e == key) {
            return Err(Error::parse(format!("line {}", k + 1), format!("duplicate key {key:?}")));
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("cannot read config {}: {e}", path.display())))
    })?;
    parse_config(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{} {location}", path.display()),
            message,
        },
        other => other,
    })
}

fn mentions(argv: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    argv.iter()
        .any(|a| a == &flag || a.strip_prefix(&flag).is_some_and(|rest| rest.starts_with('=')))
}

/// Appends config entries as flags for every key not already on the
/// command line.
pub fn merge_config(argv: &[String], entries: &[(String, String)]) -> Vec<String> {
    let mut out = argv.to_vec();
    for (key, value) in entries {
        if mentions(argv, key) {
            continue;
        }
        match value.as_str() {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => {
                out.push(format!("--{key}"));
                out.push(value.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn parse_and_merge() {
        let cfg = parse_config("# pipeline\nmax-lag = 14\nseries=a.csv  # data\n\nlocal-intercept = true\nquick = false\n").unwrap();
        assert_eq!(cfg.len(), 4);
        let merged = merge_config(&argv("countnet select-order --max-lag 3"), &cfg);
        assert_eq!(
            merged,
            argv("countnet select-order --max-lag 3 --series a.csv --local-intercept")
        );
        let merged = merge_config(&argv("countnet fit --series=b.csv"), &cfg);
        assert!(!merged.contains(&"a.csv".to_string()));
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse_config("a = 1\nnonsense\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_config("a = 1\na = 2\n").is_err());
        assert!(parse_config("= 2\n").is_err());
    }
}
