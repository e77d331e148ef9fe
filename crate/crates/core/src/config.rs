//! Flat `section.key = value` configuration files.
//!
//! ```text
//! # comment
//! seed = 7
//! extract.voxel_size = 0.2
//! eval.thresholds = 5,1
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{PoleError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PoleError::parse(path, i + 1, format!("expected `key = value`, found `{line}`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(PoleError::parse(path, i + 1, "empty key"));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(PoleError::parse(path, i + 1, format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PoleError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Sets or overrides a key.
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| PoleError::invalid(format!("config key `{key}` = `{v}`: {e}"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| PoleError::MissingKey(key.to_string()))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|v| parse_list(v).map_err(|e| PoleError::invalid(format!("config key `{key}`: {e}"))))
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

pub fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("`{s}`: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_comments_and_lists() {
        let text = "# run\nseed = 7\nextract.voxel_size=0.25 # fine\n\neval.thresholds = 5, 1\n";
        let cfg = Config::parse(text, Path::new("c.cfg")).unwrap();
        assert_eq!(cfg.require::<u64>("seed").unwrap(), 7);
        assert_eq!(cfg.get::<f64>("extract.voxel_size").unwrap(), Some(0.25));
        assert_eq!(cfg.get_list::<f64>("eval.thresholds").unwrap(), Some(vec![5.0, 1.0]));
        assert_eq!(cfg.get_or("kmeans.k", 4usize).unwrap(), 4);
    }

    #[test]
    fn missing_key_is_named() {
        let cfg = Config::default();
        let err = cfg.require::<f64>("world.extent_x").unwrap_err();
        assert!(err.to_string().contains("world.extent_x"));
    }

    #[test]
    fn bad_lines_rejected() {
        assert!(matches!(Config::parse("a = 1\nnonsense\n", Path::new("c")), Err(PoleError::Parse { line: 2, .. })));
        assert!(Config::parse("a = 1\na = 2\n", Path::new("c")).is_err());
        let cfg = Config::parse("k = x\n", Path::new("c")).unwrap();
        assert!(cfg.get::<f64>("k").is_err());
    }
}
