//! Flat `key = value` run configuration.
//!
//! Blank lines and text after `#` are ignored. Keys are case-sensitive and
//! may appear once. Lists are comma-separated.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::CliError;

/// Every key accepted by any command.
pub const KNOWN_KEYS: &[&str] = &[
    // scene
    "scene",
    "scene_file",
    "points",
    "side",
    "wavelength",
    "eta_b",
    "disk_radius",
    "disk_eta",
    "disk_center_x",
    "disk_center_y",
    "phantom_eta",
    "phantom_inclusion_eta",
    // forward solver
    "model",
    "abl_points",
    "beta",
    "mg_levels",
    "nu1",
    "nu2",
    "omega",
    "cycle",
    "tolerance",
    "max_iter",
    // acquisition
    "views",
    "sensors",
    "sensor_radius",
    "active_sensors",
    // reconstruction
    "measurements",
    "recon_points",
    "recon_abl_points",
    "recon_mg_levels",
    "gamma",
    "tau",
    "iterations",
    "subset_size",
    "seed",
    "inner_prox_iterations",
    // bench
    "contrasts",
    "radii",
    "models",
    // output
    "timing",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

impl FromStr for RunConfig {
    type Err = CliError;

    fn from_str(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected key = value", no + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::config(format!("line {}: unknown key `{key}`", no + 1)));
            }
            if value.is_empty() {
                return Err(CliError::config(format!("line {}: key `{key}` has no value", no + 1)));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::config(format!("line {}: duplicate key `{key}`", no + 1)));
            }
        }
        Ok(Self { entries })
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<(), CliError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::config(format!("unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn parse<T: FromStr>(&self, key: &str, value: &str) -> Result<T, CliError> {
        value
            .parse()
            .map_err(|_| CliError::config(format!("cannot parse `{value}` for key `{key}`")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key).map(|v| self.parse(key, v)).transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.get(key)?
            .ok_or_else(|| CliError::config(format!("missing required key `{key}`")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        self.raw(key)
            .map(|v| v.split(',').map(|item| self.parse(key, item.trim())).collect())
            .transpose()
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key) {
            None | Some("false") | Some("0") => Ok(false),
            Some("true") | Some("1") => Ok(true),
            Some(v) => Err(CliError::config(format!("key `{key}` expects true or false, got `{v}`"))),
        }
    }
}
