//! Flat `key=value` configuration with layered precedence:
//! built-in defaults, then a config file, then command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn from_defaults(defaults: &[(&str, &str)]) -> Self {
        Config { values: defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    /// Replaces known keys; unknown keys are a usage error.
    pub fn overlay<K: AsRef<str>, V: AsRef<str>>(&mut self, pairs: impl IntoIterator<Item = (K, V)>, origin: &str) -> Result<(), CliError> {
        for (k, v) in pairs {
            let k = k.as_ref();
            match self.values.get_mut(k) {
                Some(slot) => *slot = v.as_ref().to_string(),
                None => return Err(CliError::Usage(format!("{origin}: unknown key `{k}`"))),
            }
        }
        Ok(())
    }

    pub fn overlay_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let pairs = parse_pairs(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        self.overlay(pairs, &path.display().to_string())
    }

    pub fn get<T>(&self, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.raw(key)?;
        raw.parse().map_err(|e| CliError::Usage(format!("bad value `{raw}` for `{key}`: {e}")))
    }

    pub fn raw(&self, key: &str) -> Result<&str, CliError> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CliError::Usage(format!("missing key `{key}`")))
    }

    /// Comma-separated list; empty string gives an empty list.
    pub fn list<T>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.raw(key)?;
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| CliError::Usage(format!("bad item `{s}` in `{key}`: {e}"))))
            .collect()
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}

/// Lines of `key=value`; `#` starts a comment, blank lines are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", no + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_unknown_keys() {
        let mut c = Config::from_defaults(&[("a", "1"), ("b", "x")]);
        c.overlay(parse_pairs("# c\na = 2\n\nb=y # trailing").unwrap(), "file").unwrap();
        c.overlay([("a", "3")], "flags").unwrap();
        assert_eq!(c.get::<i32>("a").unwrap(), 3);
        assert_eq!(c.raw("b").unwrap(), "y");
        assert!(c.overlay([("z", "0")], "flags").is_err());
        assert!(c.get::<i32>("b").is_err());
        assert!(parse_pairs("novalue").is_err());
    }

    #[test]
    fn lists() {
        let c = Config::from_defaults(&[("h", "32, 16"), ("e", "")]);
        assert_eq!(c.list::<usize>("h").unwrap(), vec![32, 16]);
        assert!(c.list::<usize>("e").unwrap().is_empty());
    }
}
