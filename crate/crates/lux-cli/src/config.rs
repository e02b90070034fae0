//! Flat key=value config files and the flag/config/default layering.

use std::collections::BTreeMap;
use std::path::Path;

/// Parsed `key=value` lines; `#` comments and blank lines are skipped.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
        let mut values = BTreeMap::new();
        for (i, raw) in content.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected key=value", i + 1))?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    /// Flag value wins; config file fills gaps; `default` last.
    pub fn resolve<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(raw) => raw.parse().map_err(|e| format!("config key '{key}': {e}")),
            None => Ok(default),
        }
    }

    pub fn resolve_opt<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            Some(raw) => raw.parse().map(Some).map_err(|e| format!("config key '{key}': {e}")),
            None => Ok(None),
        }
    }
}

/// Default seed: `--seed` beats the config file beats `LUX_SEED` beats 42.
pub fn resolve_seed(flag: Option<u64>, config: &ConfigFile) -> Result<u64, String> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(raw) = config.get("seed") {
        return raw.parse().map_err(|e| format!("config key 'seed': {e}"));
    }
    if let Ok(raw) = std::env::var("LUX_SEED") {
        return raw.parse().map_err(|e| format!("LUX_SEED: {e}"));
    }
    Ok(42)
}
