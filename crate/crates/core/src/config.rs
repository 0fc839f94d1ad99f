//! INI-style `key = value` configuration files.
//!
//! `#` and `;` start comments, `[section]` headers prefix subsequent keys as
//! `section.key`. Later assignments override earlier ones.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CtError, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str, label: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        let mut offset = 0u64;
        for (lineno, raw) in text.lines().enumerate() {
            let line_offset = offset;
            offset += raw.len() as u64 + 1;
            let line = raw
                .split(['#', ';'])
                .next()
                .unwrap_or_default()
                .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CtError::Format {
                    path: label.to_string(),
                    offset: line_offset,
                    message: format!("line {}: expected key = value", lineno + 1),
                });
            };
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Parsed value, `Ok(None)` when absent.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                CtError::InvalidArgument(format!("config key '{key}': cannot parse '{v}'"))
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse().map_err(|_| {
                        CtError::InvalidArgument(format!("config key '{key}': bad item '{s}'"))
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_comments_and_lists() {
        let c = Config::parse(
            "seed = 4 # note\n[fista]\ntv_weight=0.5\ngrid = 0.1, 0.2 ,0.4\n; x\n",
            "t.ini",
        )
        .unwrap();
        assert_eq!(c.get::<u64>("seed").unwrap(), Some(4));
        assert_eq!(c.get::<f64>("fista.tv_weight").unwrap(), Some(0.5));
        assert_eq!(
            c.get_list::<f64>("fista.grid").unwrap(),
            Some(vec![0.1, 0.2, 0.4])
        );
        assert!(c.get::<u64>("fista.tv_weight").is_err());
        assert!(Config::parse("novalue\n", "bad.ini").is_err());
    }
}
