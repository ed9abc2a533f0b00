//! Experiment configuration: a flat `key = value` text file shared by all
//! CLI commands. Unknown keys are rejected; values are range-checked by
//! the consuming module when applied.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Keys a configuration file may define. Paths under `out_dir` are derived
/// by the commands; everything else parameterizes the pipeline stages.
pub const KNOWN_KEYS: &[&str] = &[
    "size",
    "coils",
    "seed",
    "n_train",
    "n_test",
    "mask_kind",
    "fraction",
    "spokes",
    "acs",
    "kspace_sigma",
    "sigma",
    "filters",
    "depth",
    "unroll_steps",
    "inner_alpha",
    "lr",
    "batch",
    "epochs",
    "probes",
    "probe_eps",
    "lambda",
    "lambdas",
    "step_size",
    "iterations",
    "l1_lambda",
    "methods",
    "out_dir",
];

/// Parsed configuration; insertion-order independent, serializes sorted.
#[derive(Clone, Debug, Default)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn empty() -> Self {
        ExperimentConfig::default()
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped, unknown keys and duplicate keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parameter(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Parameter(format!(
                    "config line {}: unknown key '{key}'",
                    lineno + 1
                )));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Parameter(format!(
                    "config line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
        }
        Ok(ExperimentConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Parameter(format!("config key '{key}': bad integer '{v}'")))
            })
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Parameter(format!("config key '{key}': bad integer '{v}'")))
            })
            .transpose()
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Parameter(format!("config key '{key}': bad number '{v}'")))
            })
            .transpose()
    }

    /// Comma-separated float list.
    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim().parse().map_err(|_| {
                            Error::Parameter(format!("config key '{key}': bad number '{item}'"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    /// Sorted `key = value` text, the sidecar format every command writes.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.values {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(value);
            out.push('\n');
        }
        out
    }
}
