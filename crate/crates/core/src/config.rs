//! Run configuration files: one `key=value` per line, keys named after CLI
//! flags without the leading dashes. Blank lines and `#` comments are skipped.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    pub entries: Vec<(String, String)>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key=value", i + 1)));
            };
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            if entries.iter().any(|(e, _)| e == k) {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
            entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Rejects the first key not in `known`.
    pub fn check_keys(&self, known: &[String]) -> Result<()> {
        match self.entries.iter().find(|(k, _)| !known.contains(k)) {
            Some((k, _)) => Err(Error::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    /// Command-line arguments equivalent to the file. Keys in `switches` are
    /// boolean flags: `true` adds `--key`, `false` adds nothing.
    pub fn to_args(&self, switches: &[String]) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for (k, v) in &self.entries {
            if switches.contains(k) {
                match v.as_str() {
                    "true" => out.push(format!("--{k}")),
                    "false" => {}
                    _ => return Err(Error::Config(format!("`{k}` expects true or false, got `{v}`"))),
                }
            } else {
                out.push(format!("--{k}={v}"));
            }
        }
        Ok(out)
    }
}
