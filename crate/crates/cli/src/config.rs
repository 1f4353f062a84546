//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Command-line
//! overrides replace file entries. Every key a command reads is recorded with
//! its effective value; keys nobody read are reported as unknown.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct Settings {
    entries: BTreeMap<String, String>,
    effective: RefCell<BTreeMap<String, String>>,
    read: RefCell<BTreeSet<String>>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (number, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    number + 1
                )));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", number + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", number + 1)));
            }
        }
        Ok(Self {
            entries,
            ..Self::default()
        })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.read.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(String::as_str)
    }

    fn record(&self, key: &str, value: String) {
        self.effective.borrow_mut().insert(key.to_string(), value);
    }

    pub fn get<T: FromStr + ToString>(&self, key: &str, default: T) -> Result<T, CliError> {
        let value = match self.raw(key) {
            Some(text) => text
                .parse()
                .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{text}`")))?,
            None => default,
        };
        self.record(key, value.to_string());
        Ok(value)
    }

    pub fn positive(&self, key: &str, default: f64) -> Result<f64, CliError> {
        let v: f64 = self.get(key, default)?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(CliError::Config(format!("`{key}` must be positive, got {v}")));
        }
        Ok(v)
    }

    pub fn finite(&self, key: &str, default: f64) -> Result<f64, CliError> {
        let v: f64 = self.get(key, default)?;
        if !v.is_finite() {
            return Err(CliError::Config(format!("`{key}` must be finite, got {v}")));
        }
        Ok(v)
    }

    pub fn count(&self, key: &str, default: usize) -> Result<usize, CliError> {
        let v: usize = self.get(key, default)?;
        if v == 0 {
            return Err(CliError::Config(format!("`{key}` must be at least 1")));
        }
        Ok(v)
    }

    /// Comma-separated list; step lists must be strictly increasing.
    pub fn list<T>(&self, key: &str, default: &[T]) -> Result<Vec<T>, CliError>
    where
        T: FromStr + ToString + Clone,
    {
        let values = match self.raw(key) {
            Some(text) => text
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{}`", s.trim())))
                })
                .collect::<Result<Vec<T>, _>>()?,
            None => default.to_vec(),
        };
        if values.is_empty() {
            return Err(CliError::Config(format!("`{key}` must not be empty")));
        }
        let echo: Vec<String> = values.iter().map(ToString::to_string).collect();
        self.record(key, echo.join(","));
        Ok(values)
    }

    pub fn step_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>, CliError> {
        let values = self.list(key, default)?;
        if values[0] == 0 || values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config(format!(
                "`{key}` must be positive and strictly increasing"
            )));
        }
        Ok(values)
    }

    /// Fails on keys no command read.
    pub fn check_unused(&self) -> Result<(), CliError> {
        let read = self.read.borrow();
        match self.entries.keys().find(|k| !read.contains(*k)) {
            Some(key) => Err(CliError::Config(format!("unknown key `{key}`"))),
            None => Ok(()),
        }
    }

    pub fn effective(&self) -> BTreeMap<String, String> {
        self.effective.borrow().clone()
    }
}
