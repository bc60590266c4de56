//! `key = value` configuration files. Flags take precedence over file
//! entries; file entries take precedence over built-in defaults.

use std::collections::HashMap;
use std::path::Path;

use crate::CliError;

pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    pub fn empty() -> Self {
        ConfigFile {
            values: HashMap::new(),
        }
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// ignored. Keys use the long-flag spelling (e.g. `hidden-dim = 4096`).
    pub fn load(path: Option<&Path>, known_keys: &[&str]) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::empty());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut values = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!(
                    "{}:{}: expected `key = value`, got {raw:?}",
                    path.display(),
                    idx + 1
                )));
            };
            let key = key.trim().to_string();
            if !known_keys.contains(&key.as_str()) {
                return Err(CliError::usage(format!(
                    "{}:{}: unknown key {key:?} (known: {})",
                    path.display(),
                    idx + 1,
                    known_keys.join(", ")
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| CliError::usage(format!("config key {key:?}: {e}"))),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }
}

/// flag > config file > default.
pub fn resolve<T: Clone>(flag: &Option<T>, file: Option<T>, default: T) -> T {
    flag.clone().or(file).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let dir = std::env::temp_dir().join("tokvar-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ok.conf");
        std::fs::write(&path, "# comment\nvocab = 100\nsteps=5 # inline\n").unwrap();
        let cfg = ConfigFile::load(Some(&path), &["vocab", "steps"]).unwrap();
        assert_eq!(cfg.get::<usize>("vocab").unwrap(), Some(100));
        assert_eq!(cfg.get::<usize>("steps").unwrap(), Some(5));
        assert_eq!(cfg.get::<usize>("runs").unwrap(), None);

        let bad = dir.join("bad.conf");
        std::fs::write(&bad, "nope = 1\n").unwrap();
        assert!(ConfigFile::load(Some(&bad), &["vocab"]).is_err());
    }

    #[test]
    fn precedence_is_flag_file_default() {
        assert_eq!(resolve(&Some(1), Some(2), 3), 1);
        assert_eq!(resolve(&None, Some(2), 3), 2);
        assert_eq!(resolve::<i32>(&None, None, 3), 3);
    }
}
