//! Flat `key=value` configuration files.
//!
//! Entries become `--key=value` tokens placed right after the subcommand, so
//! they go through the same parser and validators as flags, and any flag
//! given on the command line (which comes later) wins.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key=value, got '{line}'", no + 1)))?;
        let key = key.trim();
        if key.is_empty() || key.starts_with('-') || key.contains(char::is_whitespace) {
            return Err(ConfigError(format!("line {}: invalid key '{key}'", no + 1)));
        }
        if key == "config" {
            return Err(ConfigError(format!("line {}: config files cannot nest", no + 1)));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

fn config_path(args: &[OsString]) -> Result<Option<OsString>, ConfigError> {
    let mut found = None;
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            let v = iter
                .next()
                .ok_or_else(|| ConfigError("--config needs a path".into()))?;
            found = Some(v.clone());
        } else if let Some(v) = s.strip_prefix("--config=") {
            found = Some(OsString::from(v));
        }
    }
    Ok(found)
}

/// Returns `args` with the entries of the `--config` file (if any) spliced in
/// after the subcommand at position `subcommand_at`.
pub fn splice_config(args: Vec<OsString>, subcommand_at: usize) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&args[subcommand_at.min(args.len())..])? else {
        return Ok(args);
    };
    let entries = load_config(Path::new(&path))?;
    let mut out = Vec::with_capacity(args.len() + entries.len());
    out.extend_from_slice(&args[..=subcommand_at]);
    out.extend(entries.into_iter().map(|(k, v)| OsString::from(format!("--{k}={v}"))));
    out.extend_from_slice(&args[subcommand_at + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_files() {
        let cfg = parse_config("# comment\n\nseed = 7\nout=a.csv\n").unwrap();
        assert_eq!(cfg, vec![("seed".into(), "7".into()), ("out".into(), "a.csv".into())]);
        assert!(parse_config("").unwrap().is_empty());
        assert!(parse_config("seed 7").is_err());
        assert!(parse_config("=3").is_err());
        assert!(parse_config("config=x").is_err());
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = std::env::temp_dir().join(format!("rsgd-config-{}", std::process::id()));
        fs::write(&dir, "seed=3\n").unwrap();
        let args: Vec<OsString> = ["rsgd", "oja", "--config", dir.to_str().unwrap(), "--seed", "5"]
            .iter()
            .map(OsString::from)
            .collect();
        let spliced = splice_config(args, 1).unwrap();
        let strs: Vec<_> = spliced.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert_eq!(strs[..3], ["rsgd", "oja", "--seed=3"]);
        assert_eq!(strs.last().unwrap(), "5");
        fs::remove_file(dir).unwrap();
    }
}
