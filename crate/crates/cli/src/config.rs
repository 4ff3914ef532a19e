//! Run configuration: `key = value` file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Keys understood in config files. Flags use the same names with `--`.
pub const KEYS: &[&str] = &[
    "data",
    "target-col",
    "header",
    "preset",
    "n",
    "dim",
    "lengthscale",
    "noise",
    "augment",
    "method",
    "m",
    "subdomains",
    "k",
    "lambda",
    "axis",
    "width-mode",
    "pca",
    "seed",
    "seeds",
    "train-frac",
    "max-iter",
    "parallel",
    "out",
    "model-out",
    "model-in",
];

/// Resolved settings, flag values taking precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn canonical(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl RunConfig {
    /// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
    pub fn parse_file_text(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected 'key = value', got '{}'", i + 1, raw.trim()))?;
            let key = canonical(k);
            if !KEYS.contains(&key.as_str()) {
                bail!("config line {}: unknown key '{}'", i + 1, k.trim());
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse_file_text(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(canonical(key), value.into());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow!("invalid value '{v}' for {key}: {e}")),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.raw(key).ok_or_else(|| anyhow!("missing required setting --{key}"))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<T>().map_err(|e| anyhow!("invalid entry '{s}' in {key}: {e}")))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.raw(key).map(|s| s.to_ascii_lowercase()) {
            None => Ok(false),
            Some(s) => match s.as_str() {
                "" | "1" | "true" | "yes" | "on" => Ok(true),
                "0" | "false" | "no" | "off" => Ok(false),
                _ => bail!("invalid boolean '{s}' for {key}"),
            },
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }
}
