//! Plain-text `key=value` configuration files.
//!
//! One key per line, `#` starts a comment, blank lines ignored. The same
//! format serves camera files (`rows`, `cols`, `k1`, ...) and pipeline
//! files, which namespace keys by prefix (`canny.low`, `train.lr`, ...).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("key {key}: cannot parse {value:?} as {wanted}")]
    BadValue {
        key: String,
        value: String,
        wanted: &'static str,
    },
    #[error("missing required key {0}")]
    MissingKey(String),
}

/// A parsed config: last assignment per key wins, insertion order kept
/// only for error reporting.
#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    text: raw.to_string(),
                });
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Config { entries })
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Config::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Typed lookup; `None` when the key is absent.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: v.clone(),
                wanted: std::any::type_name::<T>(),
            }),
        }
    }

    /// Typed lookup with a default for absent keys.
    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, key: &str) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    /// Comma-separated list of values, e.g. `active=0,1,5`.
    pub fn get_list<T>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        let Some(raw) = self.entries.get(key) else {
            return Ok(None);
        };
        if raw.trim().is_empty() {
            return Ok(Some(Vec::new()));
        }
        raw.split(',')
            .map(|part| {
                part.trim().parse::<T>().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    value: part.trim().to_string(),
                    wanted: std::any::type_name::<T>(),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_blanks() {
        let cfg = Config::parse("# camera\nrows = 4\ncols=5 # trailing\n\nk1=0.1\n").unwrap();
        assert_eq!(cfg.get::<u32>("rows").unwrap(), Some(4));
        assert_eq!(cfg.get::<u32>("cols").unwrap(), Some(5));
        assert_eq!(cfg.get::<f64>("k1").unwrap(), Some(0.1));
        assert_eq!(cfg.get::<f64>("k2").unwrap(), None);
    }

    #[test]
    fn rejects_lines_without_equals() {
        let err = Config::parse("rows 4").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn reports_bad_values_with_key() {
        let cfg = Config::parse("rows=abc").unwrap();
        let err = cfg.get::<u32>("rows").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { .. }));
    }

    #[test]
    fn parses_comma_lists() {
        let cfg = Config::parse("active=0, 3,7").unwrap();
        assert_eq!(cfg.get_list::<usize>("active").unwrap(), Some(vec![0, 3, 7]));
    }
}
