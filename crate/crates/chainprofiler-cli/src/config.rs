use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::errors::CliError;

/// Flat `key = value` run configuration. Blank lines and lines starting
/// with `#` are ignored; later assignments to a key win; command-line
/// flags override everything here.
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn empty() -> Self {
        ConfigFile { values: BTreeMap::new() }
    }

    /// Loads and validates against the set of recognized keys so typos
    /// fail loudly instead of silently falling back to defaults.
    pub fn load(path: &Path, allowed: &[&str]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::validation(format!(
                    "{}:{}: expected key=value, got {raw:?}",
                    path.display(),
                    i + 1
                )));
            };
            let key = k.trim().to_string();
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::validation(format!(
                    "{}:{}: unknown configuration key {key:?}",
                    path.display(),
                    i + 1
                )));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Parses a value when the key is present.
    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                CliError::validation(format!("configuration key {key} = {raw:?}: {e}"))
            }),
        }
    }
}
