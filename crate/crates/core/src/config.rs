//! Flat `section.key = value` configuration on top of TOML.
//!
//! Nested tables are flattened into dotted keys so both `[env]\ntask = "chain"`
//! and `env.task = "chain"` read the same. Every getter marks its key as
//! consumed; [`FlatConfig::reject_unknown`] then reports leftovers.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use crate::error::{Error, Result};

pub use toml::Value;

#[derive(Debug, Default)]
pub struct FlatConfig {
    values: BTreeMap<String, Value>,
    used: Mutex<BTreeSet<String>>,
}

impl Clone for FlatConfig {
    fn clone(&self) -> Self {
        Self {
            values: self.values.clone(),
            used: Mutex::new(self.lock_used().clone()),
        }
    }
}

impl PartialEq for FlatConfig {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

impl FlatConfig {
    fn lock_used(&self) -> std::sync::MutexGuard<'_, BTreeSet<String>> {
        self.used.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().trim().to_string()))?;
        let mut values = BTreeMap::new();
        flatten("", &table, &mut values);
        Ok(Self {
            values,
            used: Mutex::default(),
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn raw(&self, key: &str) -> Option<&Value> {
        self.lock_used().insert(key.to_string());
        self.values.get(key)
    }

    fn type_err(key: &str, want: &str, got: &Value) -> Error {
        Error::Config(format!("key `{key}` must be {want}, got `{got}`"))
    }

    fn missing(key: &str) -> Error {
        Error::Config(format!("missing required key `{key}`"))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(Self::type_err(key, "a number", v)),
        }
    }

    pub fn req_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or_else(|| Self::missing(key))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(Self::type_err(key, "a nonnegative integer", v)),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.u64(key)?.map_or(default, |v| v as usize))
    }

    pub fn req_u64(&self, key: &str) -> Result<u64> {
        self.u64(key)?.ok_or_else(|| Self::missing(key))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(Self::type_err(key, "a boolean", v)),
        }
    }

    pub fn str(&self, key: &str) -> Result<Option<String>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(Self::type_err(key, "a string", v)),
        }
    }

    pub fn req_str(&self, key: &str) -> Result<String> {
        self.str(key)?.ok_or_else(|| Self::missing(key))
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    other => Err(Self::type_err(key, "an array of numbers", other)),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(Self::type_err(key, "an array of numbers", v)),
        }
    }

    pub fn req_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.f64_list(key)?.ok_or_else(|| Self::missing(key))
    }

    /// Errors on the first key never read by a getter.
    pub fn reject_unknown(&self) -> Result<()> {
        let used = self.lock_used();
        match self.values.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(Error::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    /// One `key = value` line per entry, sorted by key; reparses to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}
