//! `key = value` configuration files and flag/file/default resolution.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::CliError;

/// Every key a configuration file may set.
pub const KNOWN_KEYS: &[&str] = &[
    "S",
    "rho1",
    "rho2",
    "mu",
    "c1",
    "c2",
    "d",
    "r",
    "e1",
    "e2",
    "pue",
    "cpu_util",
    "indirect_multiplier",
    "ceiling_power",
    "model",
    "models",
    "tau",
    "percentile_x",
    "delta",
    "policy",
    "policies",
    "param",
    "from",
    "to",
    "step",
    "epoch_length",
    "service",
    "routing",
    "seed",
    "warmup",
    "days",
    "base1",
    "base2",
    "daily_amp",
    "weekly_amp",
    "noise_cv",
    "spike_prob",
    "spike_mult",
];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str, origin: &str) -> Result<BTreeMap<String, (String, usize)>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(CliError::Usage(format!("{origin}:{line}: expected `key = value`")));
        };
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Usage(format!("{origin}:{line}: unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(CliError::Usage(format!("{origin}:{line}: missing value for `{key}`")));
        }
        if out.insert(key.to_string(), (value.to_string(), line)).is_some() {
            return Err(CliError::Usage(format!("{origin}:{line}: `{key}` set twice")));
        }
    }
    Ok(out)
}

/// Resolves each parameter from its flag, then the config file, then the
/// built-in default, and records the result for the run manifest.
#[derive(Debug, Default)]
pub struct Resolver {
    origin: String,
    file: BTreeMap<String, Entry>,
    resolved: BTreeMap<String, serde_json::Value>,
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = config else {
            return Ok(Self::default());
        };
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {origin}: {e}")))?;
        let file = parse_config(&text, &origin)?
            .into_iter()
            .map(|(k, (value, line))| (k, Entry { value, line }))
            .collect();
        Ok(Self {
            origin,
            file,
            resolved: BTreeMap::new(),
        })
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(entry) => entry.value.parse::<T>().map_err(|e| {
                    CliError::Usage(format!("{}:{}: bad value for `{key}`: {e}", self.origin, entry.line))
                })?,
                None => default,
            },
        };
        self.record(key, &value);
        Ok(value)
    }

    /// Adds a derived value to the manifest.
    pub fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        let json = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.resolved.insert(key.to_string(), json);
    }

    pub fn into_resolved(self) -> BTreeMap<String, serde_json::Value> {
        self.resolved
    }
}
