//! `key = value` run configuration files.
//!
//! One setting per line; `#` starts a comment; blank lines are skipped. The
//! key vocabulary is fixed and shared by all commands — each command reads
//! the keys it understands and ignores the rest — so a typo is always caught.
//! Duplicate keys are rejected. Command-line flags take precedence over file
//! values, which take precedence over built-in defaults.

use std::collections::HashMap;
use std::path::Path;

use crate::errors::{CliError, CliResult};

const KNOWN_KEYS: &[&str] = &[
    "method",
    "methods",
    "alpha",
    "block_size",
    "block_sizes",
    "window",
    "shifts",
    "lag",
    "split",
    "split_ratio",
    "seed",
    "var_threshold",
    "modulation",
    "ci",
    "reps",
    "t_lens",
    "out",
    "out_dir",
];

#[derive(Debug, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    /// An empty configuration (no file given).
    pub fn empty() -> Self {
        FileConfig::default()
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::usage(format!(
                    "{}: line {}: expected key = value, got {raw:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::usage(format!(
                    "{}: line {}: unknown configuration key {key:?}",
                    path.display(),
                    lineno + 1
                )));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::usage(format!(
                    "{}: line {}: duplicate configuration key {key:?}",
                    path.display(),
                    lineno + 1
                )));
            }
        }
        Ok(FileConfig { values })
    }

    /// The raw string for `key`, if the file set it.
    pub fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(KNOWN_KEYS.contains(&key), "unknown config key queried: {key}");
        self.values.get(key).map(String::as_str)
    }

    /// Parses the value for `key` if present; a malformed value is a usage
    /// error.
    pub fn get<T: std::str::FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::usage(format!("configuration key {key} has unusable value {raw:?}"))
            }),
        }
    }
}

/// Flag > file > default.
pub fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Flag > file, with a usage error naming the missing setting otherwise.
pub fn require<T>(flag: Option<T>, file: Option<T>, what: &str) -> CliResult<T> {
    flag.or(file)
        .ok_or_else(|| CliError::usage(format!("missing required setting: {what}")))
}
